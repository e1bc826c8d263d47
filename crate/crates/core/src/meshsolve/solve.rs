use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stencil::Stencil;
use super::{GridSpec, ScalarField};
use crate::error::{LabError, Result};
use crate::operators::{Declared, OperatorSpec};

pub const DEFAULT_MAX_ITER: usize = 1_000_000;
pub const DEFAULT_RELATIVE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Residual stopping tolerance; `None` means `10⁻⁶·(1 + ‖f‖_sup)`.
    pub tol: Option<f64>,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: None, max_iter: DEFAULT_MAX_ITER }
    }
}

impl SolveOptions {
    pub fn resolve_tol(&self, f: &ScalarField) -> f64 {
        self.tol.unwrap_or(DEFAULT_RELATIVE_TOL * (1.0 + f.interior_sup()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub u: ScalarField,
    pub iterations: usize,
    pub residual_sup: f64,
    pub converged: bool,
    pub dt_used: f64,
    pub tol: f64,
}

fn check_operator(op: &OperatorSpec<f64>) -> Result<f64> {
    if let Some(d) = op.arity() {
        if d != 2 {
            return Err(LabError::DimMismatch { expected: 2, got: d });
        }
    }
    match op.declared {
        Declared::Pair(p) => Ok(p.big_lambda),
        Declared::Degenerate => Err(LabError::DegenerateOperator(op.name())),
    }
}

fn check_grid(a: &ScalarField, b: &ScalarField) -> Result<()> {
    if a.grid != b.grid {
        return Err(LabError::InvalidParameter("fields live on different grids".into()));
    }
    Ok(())
}

/// `F(x, (λ_max_h, λ_min_h))` at every interior node, zero on the ring.
pub fn discrete_operator(op: &OperatorSpec<f64>, u: &ScalarField) -> Result<ScalarField> {
    check_operator(op)?;
    let stencil = Stencil::new(&u.grid);
    let mut out = ScalarField::zeros(u.grid);
    let g = u.grid;
    out.values.par_chunks_mut(g.side()).enumerate().for_each(|(j, row)| {
        if j == 0 || j > g.n {
            return;
        }
        for (i, slot) in row.iter_mut().enumerate().take(g.n + 1).skip(1) {
            *slot = node_value(op, &stencil, &g, &u.values, i, j);
        }
    });
    Ok(out)
}

#[inline]
fn node_value(op: &OperatorSpec<f64>, stencil: &Stencil, g: &GridSpec, values: &[f64], i: usize, j: usize) -> f64 {
    let (lo, hi, _) = stencil.eigen_estimates(values, g.index(i, j));
    if op.x_dependent {
        op.eval_unchecked(Some(&g.point(i, j)), &[hi, lo])
    } else {
        op.eval_unchecked(None, &[hi, lo])
    }
}

/// `sup |F_h(u) − f|` over interior nodes, recomputed from scratch.
pub fn residual_sup(op: &OperatorSpec<f64>, u: &ScalarField, f: &ScalarField) -> Result<f64> {
    check_grid(u, f)?;
    let fh = discrete_operator(op, u)?;
    Ok(fh.interior().fold(0.0, |m, (i, j, v)| m.max((v - f.get(i, j)).abs())))
}

/// Transfinite interpolation of the ring values into the interior.
fn initial_guess(g: &ScalarField) -> ScalarField {
    let grid = g.grid;
    let last = grid.n + 1;
    let mut u = g.clone();
    let big_n = last as f64;
    for j in 1..last {
        for i in 1..last {
            let (s, t) = (i as f64 / big_n, j as f64 / big_n);
            let v = (1.0 - s) * g.get(0, j) + s * g.get(last, j) + (1.0 - t) * g.get(i, 0) + t * g.get(i, last)
                - ((1.0 - s) * (1.0 - t) * g.get(0, 0)
                    + s * (1.0 - t) * g.get(last, 0)
                    + (1.0 - s) * t * g.get(0, last)
                    + s * t * g.get(last, last));
            u.set(i, j, v);
        }
    }
    u
}

/// Pseudo-time iteration `u ← u + dt·(F_h(u) − f)` on interior nodes with the ring of `g` held
/// fixed, `dt = h²/(6Λ)`. Reads use the previous iterate only.
pub fn solve_dirichlet(
    op: &OperatorSpec<f64>,
    f: &ScalarField,
    g: &ScalarField,
    opts: SolveOptions,
) -> Result<SolveResult> {
    let big_lambda = check_operator(op)?;
    check_grid(f, g)?;
    let grid = f.grid;
    let tol = opts.resolve_tol(f);
    let h = grid.h();
    let dt = h * h / (6.0 * big_lambda);
    let stencil = Stencil::new(&grid);
    let mut cur = initial_guess(g);
    let mut next = cur.clone();
    let side = grid.side();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut first_residual = None;
    while iterations <= opts.max_iter {
        let prev = &cur.values;
        residual = next
            .values
            .par_chunks_mut(side)
            .enumerate()
            .map(|(j, row)| {
                if j == 0 || j > grid.n {
                    return 0.0;
                }
                let mut r_max: f64 = 0.0;
                for i in 1..=grid.n {
                    let k = grid.index(i, j);
                    let r = node_value(op, &stencil, &grid, prev, i, j) - f.values[k];
                    r_max = r_max.max(r.abs());
                    row[i] = prev[k] + dt * r;
                }
                r_max
            })
            .reduce(|| 0.0, f64::max);
        if !residual.is_finite() || residual > 1e12 * first_residual.unwrap_or(f64::INFINITY).max(1.0) {
            return Err(LabError::SolveDiverged { iterations, residual });
        }
        first_residual.get_or_insert(residual);
        if residual <= tol || iterations == opts.max_iter {
            // the residual belongs to `cur`; `next` is one step past it
            break;
        }
        std::mem::swap(&mut cur, &mut next);
        iterations += 1;
    }
    let converged = residual <= tol;
    Ok(SolveResult { u: cur, iterations, residual_sup: residual, converged, dt_used: dt, tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshsolve::{BoundaryProfile, ManufacturedCase};
    use crate::operators::EllipticityPair;

    fn pair() -> EllipticityPair<f64> {
        EllipticityPair::new(1.0, 2.0).unwrap()
    }

    fn catalog() -> Vec<OperatorSpec<f64>> {
        vec![
            OperatorSpec::pucci_plus(pair()),
            OperatorSpec::pucci_minus(pair()),
            OperatorSpec::extremal_ldelta(pair(), 0.1).unwrap(),
            OperatorSpec::perturbed_lagrangian(vec![1.0, 1.0]).unwrap(),
            OperatorSpec::sine_perturbed(vec![1.0, 1.0]).unwrap(),
        ]
    }

    #[test]
    fn zero_data_gives_zero() {
        let grid = GridSpec::new(12, 0.0, 1.0, 4).unwrap();
        let zero = ScalarField::zeros(grid);
        for op in catalog() {
            let r = solve_dirichlet(&op, &zero, &zero, SolveOptions::default()).unwrap();
            assert!(r.converged && r.iterations == 0);
            assert!(r.u.values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn affine_data_reproduces_the_affine_function() {
        let grid = GridSpec::new(16, -1.0, 1.0, 8).unwrap();
        let zero = ScalarField::zeros(grid);
        let p = BoundaryProfile::Affine { a1: 0.7, a2: -1.3, c: 0.25 };
        for op in catalog() {
            let r = solve_dirichlet(&op, &zero, &p.field(grid), SolveOptions::default()).unwrap();
            assert!(r.converged);
            for (i, j, v) in r.u.interior() {
                assert!((v - p.value(grid.point(i, j))).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn degenerate_operators_are_rejected() {
        let grid = GridSpec::new(8, 0.0, 1.0, 2).unwrap();
        let zero = ScalarField::zeros(grid);
        let q = OperatorSpec::q_momentum(3, 2).unwrap();
        assert!(matches!(
            solve_dirichlet(&q, &zero, &zero, SolveOptions::default()),
            Err(LabError::DegenerateOperator(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let grid = GridSpec::new(16, 0.0, 1.0, 4).unwrap();
        let p = crate::meshsolve::manufactured_problem(&catalog()[3], ManufacturedCase::Quartic, grid).unwrap();
        let r = solve_dirichlet(&catalog()[3], &p.f, &p.g, SolveOptions { tol: None, max_iter: 5 }).unwrap();
        assert!(!r.converged && r.iterations == 5 && r.residual_sup > r.tol);
    }

    #[test]
    fn converged_results_carry_a_valid_certificate() {
        let grid = GridSpec::new(15, 0.0, 1.0, 8).unwrap();
        for op in catalog() {
            let p = crate::meshsolve::manufactured_problem(&op, ManufacturedCase::Quartic, grid).unwrap();
            let r = solve_dirichlet(&op, &p.f, &p.g, SolveOptions::default()).unwrap();
            assert!(r.converged);
            let again = residual_sup(&op, &r.u, &p.f).unwrap();
            assert!(again <= r.tol, "{} {again} > {}", op.name(), r.tol);
            assert_eq!(again, r.residual_sup);
        }
    }

    #[test]
    fn saddle_solution_is_rotation_consistent() {
        let grid = GridSpec::new(17, -1.0, 1.0, 8).unwrap();
        let op = OperatorSpec::pucci_plus(pair());
        let f = ScalarField::from_fn(grid, |x| 1.0 + x[0] * x[1].powi(2));
        let g = ScalarField::boundary_from_fn(grid, |x| x[0] * x[0] - x[1] * x[1] + 0.3 * x[0]);
        let opts = SolveOptions { tol: Some(1e-9), max_iter: DEFAULT_MAX_ITER };
        let a = solve_dirichlet(&op, &f, &g, opts).unwrap();
        let b = solve_dirichlet(&op, &f.rotate90(), &g.rotate90(), opts).unwrap();
        let rotated = a.u.rotate90();
        let d = rotated.sup_diff_on(&b.u, -1.0, 1.0).unwrap();
        assert!(d <= 10.0 * 1e-9, "{d}");
    }

    #[test]
    fn discrete_comparison_on_random_pairs() {
        use rand::Rng;
        let grid = GridSpec::new(12, 0.0, 1.0, 4).unwrap();
        let op = OperatorSpec::sine_perturbed(vec![1.0, 1.0]).unwrap();
        let opts = SolveOptions { tol: Some(1e-10), max_iter: DEFAULT_MAX_ITER };
        for trial in 0..4 {
            let mut rng = crate::rng::indexed_stream(5, "comparison", trial);
            let (c1, c2, c3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
            let f2 = ScalarField::from_fn(grid, |x| 4.0 * (c1 * x[0] - c2 * x[1]).sin());
            let f1 = ScalarField::from_fn(grid, |x| 4.0 * (c1 * x[0] - c2 * x[1]).sin() + c3 * (1.0 + x[0]));
            let g2 = ScalarField::boundary_from_fn(grid, |x| x[0] * x[1] + c3);
            let g1 = g2.map(|v| v - 0.1 * c1);
            let u1 = solve_dirichlet(&op, &f1, &g1, opts).unwrap();
            let u2 = solve_dirichlet(&op, &f2, &g2, opts).unwrap();
            assert!(u1.converged && u2.converged);
            for (i, j, v) in u1.u.interior() {
                assert!(v <= u2.u.get(i, j) + 1e-9, "trial {trial} at ({i}, {j})");
            }
        }
    }
}
