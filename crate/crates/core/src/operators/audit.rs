use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Declared, OperatorSpec};
use crate::rng;
use crate::scalar::Real;
use crate::symmat::{eigen_norm, eigenvalues, random_psd, random_sym_with, SymMat};

/// Absolute slack on the increment quotient when comparing against the declared pair.
pub const AUDIT_TOLERANCE: f64 = 1e-9;
/// An empirical lower quotient at or below this is reported as observed degeneracy.
pub const DEGENERACY_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditSample<T> {
    pub index: usize,
    pub quotient: T,
    pub m: SymMat<T>,
    pub n: SymMat<T>,
    pub x: Option<Vec<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport<T> {
    pub operator: String,
    pub dim: usize,
    pub samples: usize,
    pub scale: T,
    pub seed: u64,
    pub declared: Declared<T>,
    pub empirical_lower: T,
    pub empirical_upper: T,
    pub argmin: AuditSample<T>,
    pub argmax: AuditSample<T>,
    pub degenerate_observed: bool,
    pub passed: bool,
}

/// Empirical range of `(F(M+N) − F(M))/‖N‖` over sampled `M` and `N ⪰ 0`.
///
/// `M` has entries uniform on `[−scale, scale]`, `N = QᵀDQ` with `D` uniform on `[0, s]` where
/// `s = scale·10^(−3u)`, `u` uniform, so both large and local increments are probed;
/// x-dependent operators also draw `x` uniformly from `[−1, 1]^d`. Sample `i` uses the indexed
/// stream `("audit", i)` of `seed`, so the report does not depend on thread scheduling.
pub fn audit_ellipticity<T: Real>(
    op: &OperatorSpec<T>,
    sample_count: usize,
    scale: T,
    seed: u64,
) -> EllipticityReport<T> {
    audit_ellipticity_in(op, op.arity().unwrap_or(2), sample_count, scale, seed)
}

pub fn audit_ellipticity_in<T: Real>(
    op: &OperatorSpec<T>,
    dim: usize,
    sample_count: usize,
    scale: T,
    seed: u64,
) -> EllipticityReport<T> {
    let sample_count = sample_count.max(1);
    let samples: Vec<AuditSample<T>> = (0..sample_count)
        .into_par_iter()
        .filter_map(|index| {
            let mut rng = rng::indexed_stream(seed, "audit", index as u64);
            let m = random_sym_with(dim, scale, &mut rng);
            let n_scale = scale * T::lit(10f64.powf(-3.0 * rand::Rng::gen::<f64>(&mut rng)));
            let n = random_psd(dim, n_scale, &mut rng);
            let x: Option<Vec<T>> = op.x_dependent.then(|| {
                (0..dim).map(|_| T::lit(rand::Rng::gen_range(&mut rng, -1.0..=1.0))).collect()
            });
            let norm = eigen_norm(&n).ok()?;
            if !(norm > T::tol(1e-9) * scale) {
                return None;
            }
            let eval = |a: &SymMat<T>| {
                let s = eigenvalues(a).ok()?;
                op.eval_spectrum(x.as_deref(), &s.values).ok()
            };
            let quotient = (eval(&m.add(&n))? - eval(&m)?) / norm;
            Some(AuditSample { index, quotient, m, n, x })
        })
        .collect();

    let first = samples.first().cloned().expect("at least one usable audit sample");
    let (argmin, argmax) = samples.iter().fold((first.clone(), first), |(lo, hi), s| {
        let lo = if s.quotient < lo.quotient { s.clone() } else { lo };
        let hi = if s.quotient > hi.quotient { s.clone() } else { hi };
        (lo, hi)
    });
    let tol = T::tol(AUDIT_TOLERANCE);
    let (lower, upper) = (argmin.quotient, argmax.quotient);
    let degenerate_observed = lower <= T::lit(DEGENERACY_FLOOR);
    let passed = match op.declared {
        Declared::Pair(p) => lower >= p.lambda - tol && upper <= p.big_lambda + tol,
        // degenerate operators only need to be monotone
        Declared::Degenerate => lower >= -tol,
    };
    EllipticityReport {
        operator: op.name().to_string(),
        dim,
        samples: samples.len(),
        scale,
        seed,
        declared: op.declared,
        empirical_lower: lower,
        empirical_upper: upper,
        argmin,
        argmax,
        degenerate_observed,
        passed,
    }
}
