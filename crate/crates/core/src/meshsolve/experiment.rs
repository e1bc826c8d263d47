use serde::{Deserialize, Serialize};

use super::solve::{solve_dirichlet, SolveOptions, SolveResult};
use super::{GridSpec, ScalarField};
use crate::error::{LabError, Result};
use crate::io::{csv_table, fmt_num};
use crate::operators::OperatorSpec;
use crate::recession::{mu_scale, RecessionReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManufacturedCase {
    /// `x₁⁴ + x₂⁴`
    Quartic,
    /// `x₁² − x₂²`
    Saddle,
    /// `|x|⁴`
    Radial,
}

impl ManufacturedCase {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "quartic" => Ok(Self::Quartic),
            "saddle" => Ok(Self::Saddle),
            "radial" => Ok(Self::Radial),
            other => Err(LabError::UnknownCase(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Quartic => "quartic",
            Self::Saddle => "saddle",
            Self::Radial => "radial",
        }
    }

    pub fn exact(&self, x: [f64; 2]) -> f64 {
        match self {
            Self::Quartic => x[0].powi(4) + x[1].powi(4),
            Self::Saddle => x[0] * x[0] - x[1] * x[1],
            Self::Radial => (x[0] * x[0] + x[1] * x[1]).powi(2),
        }
    }

    /// Eigenvalues of the exact Hessian, nonincreasing.
    pub fn hessian_eigenvalues(&self, x: [f64; 2]) -> [f64; 2] {
        let (a, b) = match self {
            Self::Quartic => (12.0 * x[0] * x[0], 12.0 * x[1] * x[1]),
            Self::Saddle => (2.0, -2.0),
            // 4|x|²I + 8xxᵀ
            Self::Radial => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                (12.0 * r2, 4.0 * r2)
            }
        };
        [a.max(b), a.min(b)]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedProblem {
    pub case: ManufacturedCase,
    pub u_exact: ScalarField,
    pub f: ScalarField,
    /// Ring values of `u*`, interior zero.
    pub g: ScalarField,
}

pub fn manufactured_problem(op: &OperatorSpec<f64>, case: ManufacturedCase, grid: GridSpec) -> Result<ManufacturedProblem> {
    let u_exact = ScalarField::from_fn(grid, |x| case.exact(x));
    let mut f = ScalarField::zeros(grid);
    for k in 0..grid.len() {
        let x = grid.point(k % grid.side(), k / grid.side());
        let at = op.x_dependent.then_some(&x[..]);
        f.values[k] = op.eval_spectrum(at, &case.hessian_eigenvalues(x))?;
    }
    let g = ScalarField::boundary_from_fn(grid, |x| case.exact(x));
    Ok(ManufacturedProblem { case, u_exact, f, g })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmsRow {
    pub n: usize,
    pub h: f64,
    pub sup_error: f64,
    pub iterations: usize,
    pub residual_sup: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmsStudy {
    pub operator: String,
    pub case: ManufacturedCase,
    pub rows: Vec<MmsRow>,
    /// `log₂(e_h / e_{h/2})` between consecutive rows.
    pub orders: Vec<f64>,
}

impl MmsStudy {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].sup_error < w[0].sup_error)
    }

    pub fn min_order(&self) -> f64 {
        self.orders.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Columns `n,h,sup_error,order,iterations,converged`; the first row's order is empty.
    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .enumerate()
            .map(|(k, r)| {
                vec![
                    r.n.to_string(),
                    fmt_num(r.h),
                    fmt_num(r.sup_error),
                    if k == 0 { String::new() } else { fmt_num(self.orders[k - 1]) },
                    r.iterations.to_string(),
                    r.converged.to_string(),
                ]
            })
            .collect();
        csv_table(&["n", "h", "sup_error", "order", "iterations", "converged"], &rows)
    }
}

/// Solves the manufactured problem on each spacing (each must divide `[a, b]`) and measures
/// `sup |u_h − u*|` over all nodes.
pub fn mms_convergence(
    op: &OperatorSpec<f64>,
    case: ManufacturedCase,
    a: f64,
    b: f64,
    spacings: &[f64],
    stencil_k: usize,
    opts: SolveOptions,
) -> Result<MmsStudy> {
    let mut rows = Vec::with_capacity(spacings.len());
    for &h in spacings {
        let grid = GridSpec::with_spacing(h, a, b)?;
        let grid = GridSpec::new(grid.n, a, b, stencil_k)?;
        let p = manufactured_problem(op, case, grid)?;
        let r = solve_dirichlet(op, &p.f, &p.g, opts)?;
        let sup_error = r.u.sup_diff_on(&p.u_exact, a, b)?;
        rows.push(MmsRow {
            n: grid.n,
            h: grid.h(),
            sup_error,
            iterations: r.iterations,
            residual_sup: r.residual_sup,
            converged: r.converged,
        });
    }
    let orders = rows.windows(2).map(|w| (w[0].sup_error / w[1].sup_error).log2()).collect();
    Ok(MmsStudy { operator: op.name().to_string(), case, rows, orders })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxResult {
    pub mu: f64,
    /// `sup |u − h|` over the inner half-domain.
    pub dist: f64,
    pub u: SolveResult,
    pub h: SolveResult,
}

/// Solves `F_μ(D²u) = f` and `F*(D²h) = 0` with the same ring data, `F*` the tabulated recession
/// estimate, and compares them on the concentric square of half the side.
pub fn approximation_experiment(
    op: &OperatorSpec<f64>,
    report: &RecessionReport<f64>,
    mu: f64,
    f: &ScalarField,
    g: &ScalarField,
    opts: SolveOptions,
) -> Result<ApproxResult> {
    if !report.converged {
        return Err(LabError::Precondition("recession report did not converge".into()));
    }
    let f_mu = mu_scale(op, mu)?;
    let f_star = report.to_operator(op)?;
    let zero = ScalarField::zeros(f.grid);
    let u = solve_dirichlet(&f_mu, f, g, opts)?;
    // the recession solve uses the tolerance of the F_μ solve so both share one stopping scale
    let h = solve_dirichlet(&f_star, &zero, g, SolveOptions { tol: Some(u.tol), ..opts })?;
    for r in [&u, &h] {
        if !r.converged {
            return Err(LabError::SolveNotConverged { iterations: r.iterations, residual: r.residual_sup });
        }
    }
    let (a, b) = (f.grid.a, f.grid.b);
    let quarter = (b - a) / 4.0;
    let dist = u.u.sup_diff_on(&h.u, a + quarter, b - quarter)?;
    Ok(ApproxResult { mu, dist, u, h })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::EllipticityPair;
    use crate::recession::{default_mu_schedule, estimate_recession};

    #[test]
    fn case_examples() {
        let grid = GridSpec::new(9, -1.0, 1.0, 4).unwrap();
        let lag = OperatorSpec::perturbed_lagrangian(vec![1.0, 1.0]).unwrap();
        let p = manufactured_problem(&lag, ManufacturedCase::Quartic, grid).unwrap();
        // x = 0 is node 5 on this grid
        assert_eq!(p.f.get(5, 5), 0.0);
        let [x, y] = grid.point(2, 7);
        let want = 12.0 * x * x + (12.0 * x * x).atan() + 12.0 * y * y + (12.0 * y * y).atan();
        assert!((p.f.get(2, 7) - want).abs() < 1e-12);
        assert_eq!(p.g.get(4, 4), 0.0);
        assert_eq!(p.g.get(0, 4), p.u_exact.get(0, 4));

        let plus = OperatorSpec::pucci_plus(EllipticityPair::new(1.0, 2.0).unwrap());
        let s = manufactured_problem(&plus, ManufacturedCase::Saddle, grid).unwrap();
        assert!(s.f.values.iter().all(|&v| v == 2.0));

        assert_eq!(ManufacturedCase::Radial.hessian_eigenvalues([0.5, 0.0]), [3.0, 1.0]);
        let e = ManufacturedCase::Radial.hessian_eigenvalues([0.3, 0.4]);
        assert!((e[0] - 3.0).abs() < 1e-12 && (e[1] - 1.0).abs() < 1e-12);
        assert!(matches!(ManufacturedCase::parse("cubic"), Err(LabError::UnknownCase(_))));
        assert_eq!(ManufacturedCase::parse("radial").unwrap().name(), "radial");
    }

    #[test]
    fn quartic_error_decreases_under_refinement() {
        let lag = OperatorSpec::perturbed_lagrangian(vec![1.0, 1.0]).unwrap();
        let study = mms_convergence(
            &lag,
            ManufacturedCase::Quartic,
            0.0,
            1.0,
            &[1.0 / 10.0, 1.0 / 20.0],
            8,
            SolveOptions::default(),
        )
        .unwrap();
        assert!(study.rows.iter().all(|r| r.converged));
        assert!(study.strictly_decreasing(), "{:?}", study.rows);
        assert!(study.to_csv().starts_with("n,h,sup_error,order,iterations,converged\n"));
    }

    #[test]
    fn homogeneous_operator_without_source_gives_identical_solves() {
        let plus = OperatorSpec::pucci_plus(EllipticityPair::new(1.0, 2.0).unwrap());
        let report = estimate_recession(&plus, 64, 1, &default_mu_schedule(), 1e-9).unwrap();
        let grid = GridSpec::new(15, -1.0, 1.0, 8).unwrap();
        let f = ScalarField::zeros(grid);
        let g = ScalarField::boundary_from_fn(grid, |x| (2.0 * x[0]).sin() + x[1] * x[1]);
        let r = approximation_experiment(&plus, &report, 1e-3, &f, &g, SolveOptions::default()).unwrap();
        assert!(r.dist <= 2.0 * r.u.tol, "{} vs {}", r.dist, r.u.tol);
    }

    #[test]
    fn approximation_requires_a_converged_report() {
        let sine = OperatorSpec::sine_perturbed(vec![1.0, 1.0]).unwrap();
        let mut report = estimate_recession(&sine, 32, 1, &default_mu_schedule(), 1e-9).unwrap();
        report.converged = false;
        let grid = GridSpec::new(9, -1.0, 1.0, 4).unwrap();
        let z = ScalarField::zeros(grid);
        assert!(matches!(
            approximation_experiment(&sine, &report, 0.1, &z, &z, SolveOptions::default()),
            Err(LabError::Precondition(_))
        ));
    }
}
