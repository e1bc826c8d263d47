use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::meshsolve::ScalarField;

/// Default window for the cross-exponent ratio.
pub const JN_WINDOW: (f64, f64) = (1.0 / 50.0, 50.0);

/// `max_rho·2⁻ᵏ` while at least `min_rho`.
pub fn dyadic_radii(max_rho: f64, min_rho: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = max_rho;
    while r >= min_rho && r > 0.0 {
        out.push(r);
        r *= 0.5;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BmoReport {
    pub p: f64,
    /// `max ρ⁻²·Σ_{|x−c|<ρ} |g − ⟨g⟩|^p·h²` over centres and radii.
    pub value: f64,
    pub argmax_center: [f64; 2],
    pub argmax_rho: f64,
    pub balls: usize,
}

/// Centres are interior nodes on a lattice of the given stride through the middle node; a ball
/// counts when it fits inside the domain. Masked nodes are left out of both mean and sum.
pub fn bmo_seminorm(g: &ScalarField, p: f64, rho_schedule: &[f64], center_stride: usize) -> Result<BmoReport> {
    if !(p >= 1.0) {
        return Err(LabError::InvalidParameter(format!("p must be at least 1, got {p}")));
    }
    if center_stride == 0 || rho_schedule.is_empty() || rho_schedule.iter().any(|r| !(*r > 0.0)) {
        return Err(LabError::InvalidParameter("need a positive stride and positive radii".into()));
    }
    let grid = g.grid;
    let (n, h) = (grid.n, grid.h());
    let mid = (n + 1) / 2;
    let centres: Vec<usize> = (1..=n).filter(|i| i.abs_diff(mid) % center_stride == 0).collect();
    let eps = 1e-12 * (grid.b - grid.a);
    let jobs: Vec<(usize, usize, f64)> = centres
        .iter()
        .flat_map(|&j| centres.iter().flat_map(move |&i| rho_schedule.iter().map(move |&r| (i, j, r))))
        .filter(|&(i, j, r)| {
            let [x, y] = grid.point(i, j);
            x - r >= grid.a - eps && x + r <= grid.b + eps && y - r >= grid.a - eps && y + r <= grid.b + eps
        })
        .collect();
    let best = jobs
        .par_iter()
        .filter_map(|&(i, j, rho)| {
            let reach = (rho / h).ceil() as usize;
            let c = grid.point(i, j);
            let r2 = rho * rho * (1.0 - 1e-12);
            let mut nodes = Vec::new();
            for jj in j.saturating_sub(reach)..=(j + reach).min(n + 1) {
                for ii in i.saturating_sub(reach)..=(i + reach).min(n + 1) {
                    let [x, y] = grid.point(ii, jj);
                    let d2 = (x - c[0]).powi(2) + (y - c[1]).powi(2);
                    let v = g.get(ii, jj);
                    if d2 < r2 && v.is_finite() {
                        nodes.push(v);
                    }
                }
            }
            if nodes.is_empty() {
                return None;
            }
            // pivot on the first value so constant fields give an exact mean
            let pivot = nodes[0];
            let mean = pivot + nodes.iter().map(|v| v - pivot).sum::<f64>() / nodes.len() as f64;
            let osc: f64 = nodes.iter().map(|v| (v - mean).abs().powf(p)).sum();
            Some((osc * h * h / (rho * rho), c, rho))
        })
        .reduce_with(|a, b| if b.0 > a.0 { b } else { a });
    let (value, argmax_center, argmax_rho) = best.ok_or_else(|| LabError::Precondition("no admissible ball".into()))?;
    Ok(BmoReport { p, value, argmax_center, argmax_rho, balls: jobs.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JnReport {
    pub p: f64,
    pub q: f64,
    pub bmo_p: BmoReport,
    pub bmo_q: BmoReport,
    /// `bmo_p^{1/p} / bmo_q^{1/q}`, with `0/0 = 1`.
    pub ratio: f64,
    pub window: (f64, f64),
    pub passed: bool,
}

pub fn jn_equivalence_check(
    g: &ScalarField,
    p: f64,
    q: f64,
    rho_schedule: &[f64],
    center_stride: usize,
    window: (f64, f64),
) -> Result<JnReport> {
    if !(p > 1.0 && p.is_finite() && q > 1.0 && q.is_finite()) {
        return Err(LabError::InvalidParameter(format!("exponents must lie in (1, inf), got {p}, {q}")));
    }
    let bmo_p = bmo_seminorm(g, p, rho_schedule, center_stride)?;
    let bmo_q = bmo_seminorm(g, q, rho_schedule, center_stride)?;
    let (a, b) = (bmo_p.value.powf(1.0 / p), bmo_q.value.powf(1.0 / q));
    let ratio = if a == 0.0 && b == 0.0 { 1.0 } else { a / b };
    let passed = ratio >= window.0 && ratio <= window.1;
    Ok(JnReport { p, q, bmo_p, bmo_q, ratio, window, passed })
}
