//! Hessian integrability diagnostics on grid fields: discrete Hessians, distribution functions
//! and their dyadic sums, paraboloid touching sets and the opening field `Θ`, measure-decay fits,
//! and `p`-BMO seminorms.
//!
//! Nodes carry trapezoid weights (`h²`, halved once per boundary axis), so a constant field
//! integrates to its value times the domain area. Non-finite values mark masked nodes, which
//! every measure and norm skips.

mod bmo;
mod hull;
mod touching;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::io::{csv_table, fmt_num};
use crate::meshsolve::ScalarField;
use crate::symmat::{eigen_norm, SymMat};

pub use bmo::{bmo_seminorm, dyadic_radii, jn_equivalence_check, BmoReport, JnReport, JN_WINDOW};
pub use hull::lower_hull_membership;
pub use touching::{
    decay_curve, decay_fit, fit_power_law, opening_schedule, theta_field, touching_sets, DecayFit, Side, SubSquare,
    ThetaField, TouchingMask, DEFAULT_THETA_KMAX, DEFAULT_THETA_M0,
};

/// Default window for both dyadic-sum ratios.
pub const LEMMA_WINDOW: (f64, f64) = (1e-3, 1e3);

/// Quadrature weight of node `(i, j)`.
pub fn node_weight(field: &ScalarField, i: usize, j: usize) -> f64 {
    let g = field.grid;
    let h = g.h();
    let edge = |k: usize| if k == 0 || k == g.n + 1 { 0.5 } else { 1.0 };
    h * h * edge(i) * edge(j)
}

fn weighted_nodes(field: &ScalarField) -> impl Iterator<Item = (f64, f64)> + '_ {
    let side = field.grid.side();
    field
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .map(move |(k, &v)| (node_weight(field, k % side, k / side), v))
}

/// Central second differences per interior node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianField {
    pub n: usize,
    /// Row-major over interior nodes, `(i, j) ↦ (j − 1)·n + (i − 1)`.
    pub entries: Vec<SymMat<f64>>,
}

impl HessianField {
    pub fn at(&self, i: usize, j: usize) -> &SymMat<f64> {
        &self.entries[(j - 1) * self.n + (i - 1)]
    }

    /// The eigen-norm `Σ|eᵢ|` per interior node; the ring is masked.
    pub fn norm_field(&self, like: &ScalarField) -> ScalarField {
        let mut out = like.map(|_| f64::NAN);
        for j in 1..=self.n {
            for i in 1..=self.n {
                out.set(i, j, eigen_norm(self.at(i, j)).unwrap_or(f64::NAN));
            }
        }
        out
    }
}

/// `D₁₁, D₂₂` by the three-point rule and `D₁₂` by the four-corner rule.
pub fn hessian_field(u: &ScalarField) -> HessianField {
    let n = u.grid.n;
    let h2 = u.grid.h() * u.grid.h();
    let mut entries = Vec::with_capacity(n * n);
    for j in 1..=n {
        for i in 1..=n {
            let c = u.get(i, j);
            let d11 = (u.get(i + 1, j) - 2.0 * c + u.get(i - 1, j)) / h2;
            let d22 = (u.get(i, j + 1) - 2.0 * c + u.get(i, j - 1)) / h2;
            let d12 = (u.get(i + 1, j + 1) - u.get(i + 1, j - 1) - u.get(i - 1, j + 1) + u.get(i - 1, j - 1)) / (4.0 * h2);
            entries.push(SymMat::from_upper(2, vec![d11, d12, d22]).expect("2x2 packed"));
        }
    }
    HessianField { n, entries }
}

/// `μ_g(t) = |{g > t}|` on an increasing threshold list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionCurve {
    pub thresholds: Vec<f64>,
    pub measures: Vec<f64>,
    /// Total weight of the unmasked nodes.
    pub domain_measure: f64,
}

impl DistributionCurve {
    /// Columns `threshold,measure`.
    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> =
            self.thresholds.iter().zip(&self.measures).map(|(&t, &m)| vec![fmt_num(t), fmt_num(m)]).collect();
        csv_table(&["threshold", "measure"], &rows)
    }
}

pub fn distribution_function(g: &ScalarField, thresholds: &[f64]) -> Result<DistributionCurve> {
    if thresholds.iter().any(|t| !(*t > 0.0)) || thresholds.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(LabError::InvalidParameter("thresholds must be positive and increasing".into()));
    }
    if g.values.iter().any(|&v| v < 0.0) {
        return Err(LabError::InvalidParameter("distribution function needs a nonnegative field".into()));
    }
    let mut measures = vec![0.0; thresholds.len()];
    let mut domain_measure = 0.0;
    for (w, v) in weighted_nodes(g) {
        domain_measure += w;
        // thresholds strictly below v
        let k = thresholds.partition_point(|&t| t < v);
        for m in &mut measures[..k] {
            *m += w;
        }
    }
    Ok(DistributionCurve { thresholds: thresholds.to_vec(), measures, domain_measure })
}

/// `∫|g|^p` by the weighted node sum.
pub fn lp_norm_pow(g: &ScalarField, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(LabError::InvalidParameter(format!("p must be positive, got {p}")));
    }
    Ok(weighted_nodes(g).map(|(w, v)| w * v.abs().powf(p)).sum())
}

pub fn lp_norm(g: &ScalarField, p: f64) -> Result<f64> {
    Ok(lp_norm_pow(g, p)?.powf(1.0 / p))
}

/// `η·Mᵏ` for `k = 1, 2, …` up to and including the first threshold strictly above `max_g`.
pub fn lemma_thresholds(eta: f64, mbase: f64, max_g: f64) -> Result<Vec<f64>> {
    if !(eta > 0.0) || !(mbase > 1.0) || !max_g.is_finite() {
        return Err(LabError::InvalidParameter("need eta > 0, Mbase > 1 and a finite maximum".into()));
    }
    let mut out = vec![eta * mbase];
    while *out.last().unwrap() <= max_g {
        out.push(out.last().unwrap() * mbase);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub p: f64,
    pub eta: f64,
    pub mbase: f64,
    /// `Σ_k M^{pk} μ_g(η·Mᵏ)`, with the strict `g > t` level sets.
    pub s: f64,
    /// `∫|g|^p` by node sum.
    pub direct_lp_pow: f64,
    pub domain_measure: f64,
    /// `S / ∫|g|^p`, bounded by the lower inequality.
    pub lower_ratio: f64,
    /// `∫|g|^p / (|Ω| + S)`, bounded by the upper inequality.
    pub upper_ratio: f64,
    pub window: (f64, f64),
    pub passed: bool,
}

/// Compares the dyadic distribution sum against the direct `L^p` integral. `curve` must contain
/// every threshold `η·Mᵏ` with `k = 1..` up to one above the field maximum.
pub fn lp_via_distribution(
    curve: &DistributionCurve,
    p: f64,
    eta: f64,
    mbase: f64,
    direct_lp_pow: f64,
    max_g: f64,
    window: (f64, f64),
) -> Result<EquivalenceReport> {
    if !(p > 0.0) {
        return Err(LabError::InvalidParameter(format!("p must be positive, got {p}")));
    }
    let wanted = lemma_thresholds(eta, mbase, max_g)?;
    let mut s = 0.0;
    for (k, t) in wanted.iter().enumerate() {
        let idx = curve
            .thresholds
            .iter()
            .position(|&c| (c - t).abs() <= 1e-12 * t)
            .ok_or_else(|| LabError::Precondition(format!("curve lacks threshold {t}")))?;
        s += mbase.powf(p * (k + 1) as f64) * curve.measures[idx];
    }
    let (lower_ratio, upper_ratio) = if s == 0.0 && direct_lp_pow == 0.0 {
        (1.0, 1.0)
    } else {
        (s / direct_lp_pow, direct_lp_pow / (curve.domain_measure + s))
    };
    let inside = |r: f64| r >= window.0 && r <= window.1;
    Ok(EquivalenceReport {
        p,
        eta,
        mbase,
        s,
        direct_lp_pow,
        domain_measure: curve.domain_measure,
        lower_ratio,
        upper_ratio,
        window,
        passed: (s == 0.0 && direct_lp_pow == 0.0) || (inside(lower_ratio) && inside(upper_ratio)),
    })
}

/// Distribution curve, direct integral and ratios for one field in one call.
pub fn lemma_equivalence(g: &ScalarField, p: f64, eta: f64, mbase: f64, window: (f64, f64)) -> Result<EquivalenceReport> {
    let max_g = weighted_nodes(g).fold(0.0, |m: f64, (_, v)| m.max(v));
    let thresholds = lemma_thresholds(eta, mbase, max_g)?;
    let curve = distribution_function(g, &thresholds)?;
    lp_via_distribution(&curve, p, eta, mbase, lp_norm_pow(g, p)?, max_g, window)
}
