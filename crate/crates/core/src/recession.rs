//! The tangential path `F_μ(M) = μF(μ⁻¹M)`, tabulated recession functions and the convergence
//! modulus `ω(ε)`.

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::io::{csv_table, fmt_num};
use crate::operators::{OperatorKind, OperatorSpec, SpectralTable};
use crate::rng;
use crate::scalar::Real;
use crate::symmat::{eigenvalues, random_unit_direction, SymMat};

/// Upper end of the μ range on which the modulus is defined.
pub const DEFAULT_MU_CAP: f64 = 1.0;

/// `{2⁻¹, 2⁻², …, 2⁻¹⁴}`.
pub fn default_mu_schedule<T: Real>() -> Vec<T> {
    geometric_schedule(T::lit(0.5), T::lit(0.5), 14)
}

/// `first, first·ratio, …` (`count` entries).
pub fn geometric_schedule<T: Real>(first: T, ratio: T, count: usize) -> Vec<T> {
    std::iter::successors(Some(first), |&m| Some(m * ratio)).take(count).collect()
}

/// `μ·F(x, μ⁻¹M)` as an operator. Nested scalings collapse into one factor.
pub fn mu_scale<T: Real>(op: &OperatorSpec<T>, mu: T) -> Result<OperatorSpec<T>> {
    if !(mu > T::zero()) || !mu.is_finite() {
        return Err(LabError::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    let (base, mu) = match &op.kind {
        OperatorKind::MuScaled { base, mu: inner } => (base.clone(), *inner * mu),
        _ => (Box::new(op.clone()), mu),
    };
    Ok(OperatorSpec {
        declared: op.declared,
        x_dependent: op.x_dependent,
        kind: OperatorKind::MuScaled { base, mu },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecessionReport<T> {
    pub operator: String,
    pub dim: usize,
    pub at: Option<Vec<T>>,
    pub directions: Vec<SymMat<T>>,
    /// Eigenvalues of each direction, nonincreasing.
    pub spectra: Vec<Vec<T>>,
    /// `F_μ` at the smallest μ, per direction.
    pub values: Vec<T>,
    pub mu_schedule: Vec<T>,
    /// `path[k][i] = F_{μ_k}(Dᵢ)`.
    pub path: Vec<Vec<T>>,
    /// Per μ, the sup over directions of `|F_μ − values|`. Recorded as computed, not forced monotone.
    pub sup_deviation_per_mu: Vec<T>,
    /// Sup over directions of `|F_{μ_{K−1}} − F_{μ_K}|`.
    pub last_step_change: T,
    pub tol: T,
    pub converged: bool,
    /// Sup over directions of `|values − F*_closed|` when the catalog knows `F*`.
    pub closed_form_deviation: Option<T>,
}

impl<T: Real> RecessionReport<T> {
    pub fn smallest_mu(&self) -> T {
        *self.mu_schedule.last().expect("schedule is non-empty")
    }

    /// Flat `direction,mu,value` rows over the whole schedule.
    pub fn to_csv(&self) -> String {
        let mut rows = Vec::with_capacity(self.path.len() * self.values.len());
        for (k, mu) in self.mu_schedule.iter().enumerate() {
            for (i, v) in self.path[k].iter().enumerate() {
                rows.push(vec![i.to_string(), fmt_num(mu.as_f64()), fmt_num(v.as_f64())]);
            }
        }
        csv_table(&["direction", "mu", "value"], &rows)
    }

    /// The 2-D table as a spectral operator with 1-homogeneous extension, inheriting the declared
    /// pair of `source`.
    pub fn to_operator(&self, source: &OperatorSpec<T>) -> Result<OperatorSpec<T>> {
        if self.dim != 2 {
            return Err(LabError::UnsupportedDim(self.dim));
        }
        let samples = self
            .spectra
            .iter()
            .zip(&self.values)
            .map(|(e, &v)| {
                let norm = e[0].abs() + e[1].abs();
                (SpectralTable::position(e[0] / norm, e[1] / norm), v / norm)
            })
            .collect();
        Ok(OperatorSpec::tabulated(SpectralTable::from_samples(samples)?, source.declared))
    }
}

fn check_schedule<T: Real>(schedule: &[T]) -> Result<()> {
    if schedule.len() < 3 {
        return Err(LabError::Precondition("mu schedule needs at least 3 entries".into()));
    }
    if schedule.iter().any(|m| !(*m > T::zero())) || schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(LabError::Precondition("mu schedule must be positive and strictly decreasing".into()));
    }
    if !(*schedule.last().unwrap() < T::lit(1e-3)) {
        return Err(LabError::Precondition("mu schedule must end below 1e-3".into()));
    }
    Ok(())
}

/// Unit directions for the estimator. In 2-D the first four are the diamond corners
/// `diag(½,½), diag(1,0), diag(0,−1), diag(−½,−½)`, which the tabulated extension needs; the rest
/// are random rotations of uniform diagonals.
pub fn sample_directions<T: Real>(dim: usize, count: usize, seed: u64) -> Vec<SymMat<T>> {
    let mut out: Vec<SymMat<T>> = Vec::with_capacity(count);
    if dim == 2 {
        let h = T::lit(0.5);
        for d in [[h, h], [T::one(), T::zero()], [T::zero(), -T::one()], [-h, -h]] {
            if out.len() < count {
                out.push(SymMat::diag(&d));
            }
        }
    }
    let mut rng = rng::stream(seed, "recession_directions");
    while out.len() < count {
        out.push(random_unit_direction(dim, &mut rng));
    }
    out
}

pub fn estimate_recession<T: Real>(
    op: &OperatorSpec<T>,
    direction_count: usize,
    seed: u64,
    mu_schedule: &[T],
    tol: T,
) -> Result<RecessionReport<T>> {
    estimate_recession_at(op, None, direction_count, seed, mu_schedule, tol)
}

/// Tabulates `F_μ` on unit directions along the schedule. Evaluating on the unit sphere is enough;
/// off the sphere the estimate extends 1-homogeneously.
pub fn estimate_recession_at<T: Real>(
    op: &OperatorSpec<T>,
    at: Option<&[T]>,
    direction_count: usize,
    seed: u64,
    mu_schedule: &[T],
    tol: T,
) -> Result<RecessionReport<T>> {
    check_schedule(mu_schedule)?;
    if direction_count == 0 {
        return Err(LabError::Precondition("direction_count must be >= 1".into()));
    }
    let dim = op.arity().unwrap_or(2);
    let directions = sample_directions::<T>(dim, direction_count, seed);
    let spectra = directions
        .iter()
        .map(|d| eigenvalues(d).map(|s| s.values))
        .collect::<Result<Vec<_>>>()?;
    let scaled = mu_schedule.iter().map(|&mu| mu_scale(op, mu)).collect::<Result<Vec<_>>>()?;
    let path = scaled
        .par_iter()
        .map(|f| spectra.iter().map(|e| f.eval_spectrum(at, e)).collect::<Result<Vec<T>>>())
        .collect::<Result<Vec<_>>>()?;
    let values = path.last().unwrap().clone();
    let sup_diff = |a: &[T], b: &[T]| {
        a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc.max((x - y).abs()))
    };
    let sup_deviation_per_mu = path.iter().map(|row| sup_diff(row, &values)).collect();
    let k = path.len();
    let last_step_change = sup_diff(&path[k - 2], &path[k - 1]);
    let closed_form_deviation = match op.closed_form_recession() {
        Some(star) => {
            let exact = spectra.iter().map(|e| star.eval_spectrum(at, e)).collect::<Result<Vec<T>>>()?;
            Some(sup_diff(&exact, &values))
        }
        None => None,
    };
    Ok(RecessionReport {
        operator: op.name().to_string(),
        dim,
        at: at.map(<[T]>::to_vec),
        directions,
        spectra,
        values,
        mu_schedule: mu_schedule.to_vec(),
        path,
        sup_deviation_per_mu,
        last_step_change,
        tol,
        converged: last_step_change < tol,
        closed_form_deviation,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReport<T> {
    pub mu: T,
    pub scales: Vec<T>,
    /// Per scale, `max_D |F_μ(tD) − t·F_μ(D)| / t` (relative to `‖tD‖ = t`).
    pub per_scale: Vec<T>,
    pub max_discrepancy: T,
}

pub fn check_homogeneity<T: Real>(
    report: &RecessionReport<T>,
    op: &OperatorSpec<T>,
    scales: &[T],
) -> Result<HomogeneityReport<T>> {
    if !report.converged {
        return Err(LabError::Precondition("homogeneity check needs a converged report".into()));
    }
    if scales.iter().any(|t| !(*t > T::zero())) {
        return Err(LabError::InvalidParameter("scales must be positive".into()));
    }
    let mu = report.smallest_mu();
    let f = mu_scale(op, mu)?;
    let at = report.at.as_deref();
    let per_scale = scales
        .iter()
        .map(|&t| {
            report.spectra.iter().zip(&report.values).try_fold(T::zero(), |acc, (e, &v)| {
                let scaled: Vec<T> = e.iter().map(|&l| l * t).collect();
                let ft = f.eval_spectrum(at, &scaled)?;
                Ok(acc.max((ft - t * v).abs() / t))
            })
        })
        .collect::<Result<Vec<T>>>()?;
    let max_discrepancy = per_scale.iter().fold(T::zero(), |a, &b| a.max(b));
    Ok(HomogeneityReport { mu, scales: scales.to_vec(), per_scale, max_discrepancy })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusEstimate<T> {
    pub epsilon: T,
    pub mu0_estimate: T,
    pub samples_used: usize,
    pub capped: bool,
    pub mu_cap: T,
    /// False when even the smallest probe failed; `mu0_estimate` is then that probe.
    pub bracketed: bool,
}

const OMEGA_PROBES: usize = 40;
const OMEGA_BISECTIONS: usize = 48;

pub fn modulus_omega<T: Real>(
    op: &OperatorSpec<T>,
    recession: &RecessionReport<T>,
    epsilon: T,
    sample_count: usize,
    seed: u64,
) -> Result<ModulusEstimate<T>> {
    modulus_omega_capped(op, recession, epsilon, sample_count, seed, T::lit(DEFAULT_MU_CAP))
}

/// Largest `μ₀ ≤ mu_cap` with `sup_D |F_μ(D) − F*(D)| / 2 ≤ ε` at every probed `μ ≤ μ₀`.
///
/// `D` ranges over (a seeded subset of) the report's unit directions, where `ε(1 + ‖D‖) = 2ε`.
/// Probes are `mu_cap·2⁻ᵏ`; the crossing is then bisected in log-space.
pub fn modulus_omega_capped<T: Real>(
    op: &OperatorSpec<T>,
    recession: &RecessionReport<T>,
    epsilon: T,
    sample_count: usize,
    seed: u64,
    mu_cap: T,
) -> Result<ModulusEstimate<T>> {
    if !(epsilon > T::zero()) {
        return Err(LabError::InvalidParameter(format!("epsilon must be > 0, got {epsilon}")));
    }
    if !recession.converged {
        return Err(LabError::Precondition("modulus needs a converged recession report".into()));
    }
    let total = recession.values.len();
    let chosen: Vec<usize> = if sample_count >= total {
        (0..total).collect()
    } else {
        let mut rng = rng::stream(seed, "omega_subset");
        let mut idx = sample_indices(&mut rng, total, sample_count.max(1)).into_vec();
        idx.sort_unstable();
        idx
    };
    let at = recession.at.as_deref();
    let two = T::lit(2.0);
    let holds = |mu: T| -> Result<bool> {
        let f = mu_scale(op, mu)?;
        for &i in &chosen {
            let v = f.eval_spectrum(at, &recession.spectra[i])?;
            if !((v - recession.values[i]).abs() / two <= epsilon) {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let probes = geometric_schedule(mu_cap, T::lit(0.5), OMEGA_PROBES);
    let ok = probes.iter().map(|&m| holds(m)).collect::<Result<Vec<bool>>>()?;
    // first probe index from which every smaller probe holds
    let start = ok.iter().rposition(|&b| !b).map_or(0, |k| k + 1);
    let estimate = |mu0, capped, bracketed| ModulusEstimate {
        epsilon,
        mu0_estimate: mu0,
        samples_used: chosen.len(),
        capped,
        mu_cap,
        bracketed,
    };
    if start == 0 {
        return Ok(estimate(mu_cap, true, true));
    }
    if start == probes.len() {
        return Ok(estimate(probes[probes.len() - 1], false, false));
    }
    let (mut lo, mut hi) = (probes[start].ln(), probes[start - 1].ln());
    for _ in 0..OMEGA_BISECTIONS {
        let mid = (lo + hi) / two;
        if holds(mid.exp())? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(estimate(lo.exp(), false, true))
}
