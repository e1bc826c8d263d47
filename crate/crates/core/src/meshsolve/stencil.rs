use super::{GridSpec, ScalarField};
use crate::error::{LabError, Result};

/// Bilinear taps of `u(x + hθ) + u(x − hθ)` as `(di, dj, weight)`, merged by offset and with zero
/// weights dropped. Reach `h` keeps every tap inside the 3×3 neighbourhood.
fn taps(theta: f64) -> Vec<(isize, isize, f64)> {
    let snap = |v: f64| if v.abs() < 1e-15 { 0.0 } else { v };
    let (c, s) = (snap(theta.cos()), snap(theta.sin()));
    let mut out: Vec<(isize, isize, f64)> = Vec::with_capacity(8);
    for (px, py) in [(c, s), (-c, -s)] {
        let (ix, iy) = (px.floor(), py.floor());
        let (fx, fy) = (px - ix, py - iy);
        let (ix, iy) = (ix as isize, iy as isize);
        for (di, dj, w) in [
            (ix, iy, (1.0 - fx) * (1.0 - fy)),
            (ix + 1, iy, fx * (1.0 - fy)),
            (ix, iy + 1, (1.0 - fx) * fy),
            (ix + 1, iy + 1, fx * fy),
        ] {
            if w == 0.0 {
                continue;
            }
            match out.iter_mut().find(|t| t.0 == di && t.1 == dj) {
                Some(t) => t.2 += w,
                None => out.push((di, dj, w)),
            }
        }
    }
    out
}

/// Precomputed directional taps for one grid, as flat index offsets.
#[derive(Clone, Debug)]
pub struct Stencil {
    h2: f64,
    directions: Vec<Vec<(isize, f64)>>,
    axis_pair: (usize, usize),
}

impl Stencil {
    pub fn new(grid: &GridSpec) -> Self {
        let side = grid.side() as isize;
        let directions = grid
            .directions()
            .into_iter()
            .map(|t| taps(t).into_iter().map(|(di, dj, w)| (dj * side + di, w)).collect())
            .collect();
        let h = grid.h();
        Self { h2: h * h, directions, axis_pair: (0, grid.stencil_k) }
    }

    #[inline]
    fn second_difference(&self, values: &[f64], k: usize, m: usize) -> f64 {
        let centre = values[k];
        let mut acc = -2.0 * centre;
        for &(off, w) in &self.directions[m] {
            acc += w * values[(k as isize + off) as usize];
        }
        acc / self.h2
    }

    /// `(λ_min, λ_max, trace)` at flat index `k` of an interior node. `λ_min` is the smallest
    /// directional difference, `trace` the axis pair (the five-point Laplacian) and
    /// `λ_max = trace − λ_min`.
    #[inline]
    pub fn eigen_estimates(&self, values: &[f64], k: usize) -> (f64, f64, f64) {
        let mut lmin = f64::INFINITY;
        for m in 0..self.directions.len() {
            lmin = lmin.min(self.second_difference(values, k, m));
        }
        let trace = self.second_difference(values, k, self.axis_pair.0)
            + self.second_difference(values, k, self.axis_pair.1);
        (lmin, trace - lmin, trace)
    }
}

fn check_interior(u: &ScalarField, i: usize, j: usize) -> Result<()> {
    if !u.grid.is_interior(i, j) {
        return Err(LabError::InvalidParameter(format!("node ({i}, {j}) is not interior")));
    }
    Ok(())
}

/// `(u(x + hθ) − 2u(x) + u(x − hθ))/h²` with bilinearly interpolated endpoints.
pub fn directional_second_difference(u: &ScalarField, theta: f64, i: usize, j: usize) -> Result<f64> {
    check_interior(u, i, j)?;
    let g = u.grid;
    let mut acc = -2.0 * u.get(i, j);
    for (di, dj, w) in taps(theta) {
        acc += w * u.get((i as isize + di) as usize, (j as isize + dj) as usize);
    }
    Ok(acc / (g.h() * g.h()))
}

pub fn hessian_eigen_estimates(u: &ScalarField, i: usize, j: usize) -> Result<(f64, f64, f64)> {
    check_interior(u, i, j)?;
    Ok(Stencil::new(&u.grid).eigen_estimates(&u.values, u.grid.index(i, j)))
}
