//! Approximating operators `F^j = max{F, L_δ − C_j}` built from the widened convex extremal
//! operator `L_δ`, and checks of the two collar identities `F^j = F` on `‖M‖ ≤ j` and
//! `F^j = L_δ − C_j` on `‖M‖ ≥ C_j/δ`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::operators::{audit_ellipticity, Declared, EllipticityPair, OperatorKind, OperatorSpec};
use crate::recession::{estimate_recession, geometric_schedule, RecessionReport};
use crate::rng;
use crate::scalar::Real;
use crate::symmat::{eigenvalues, random_unit_direction, signed_traces_of, SymMat};

pub use crate::operators::DensityParams;

/// Samples used by [`verify_collar`] to confirm its ellipticity precondition.
pub const COLLAR_AUDIT_SAMPLES: usize = 2_000;

/// `δ = λ/10`.
pub fn default_delta<T: Real>(pair: &EllipticityPair<T>) -> T {
    pair.lambda * T::lit(0.1)
}

/// `(Λ+δ)·trace⁺(M) + (λ−δ)·trace⁻(M)`.
pub fn extremal_ldelta<T: Real>(pair: &EllipticityPair<T>, delta: T, m: &SymMat<T>) -> Result<T> {
    if !(delta > T::zero() && delta < pair.lambda) {
        return Err(LabError::InvalidParameter(format!(
            "delta must lie in (0, lambda = {}), got {delta}",
            pair.lambda
        )));
    }
    let (p, n) = signed_traces_of(&eigenvalues(m)?.values);
    Ok((pair.big_lambda + delta) * p + (pair.lambda - delta) * n)
}

/// Wraps `op` as `F^j`. The wrapper is `(λ−δ, Λ+δ)`-elliptic.
pub fn fj_operator<T: Real>(op: &OperatorSpec<T>, params: DensityParams<T>) -> Result<OperatorSpec<T>> {
    if op.declared != Declared::Pair(params.pair) {
        return Err(LabError::EllipticityMismatch(format!(
            "{} declares {:?}, construction uses {:?}",
            op.name(),
            op.declared,
            params.pair
        )));
    }
    let widened = EllipticityPair::new(params.pair.lambda - params.delta, params.pair.big_lambda + params.delta)?;
    Ok(OperatorSpec {
        kind: OperatorKind::FjWrapper { base: Box::new(op.clone()), params },
        declared: Declared::Pair(widened),
        x_dependent: op.x_dependent,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollarViolation<T> {
    pub norm: T,
    pub fj: T,
    pub expected: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollarReport<T> {
    pub j: u32,
    pub cj: T,
    pub inner_radius: T,
    pub outer_radius: T,
    pub inner_samples: usize,
    pub outer_samples: usize,
    pub inner_pass: usize,
    pub outer_pass: usize,
    /// `min F − (L_δ − C_j)` over the inner samples.
    pub inner_worst_margin: T,
    /// `min (L_δ − C_j) − F` over the outer samples.
    pub outer_worst_margin: T,
    pub inner_violations: Vec<CollarViolation<T>>,
    pub outer_violations: Vec<CollarViolation<T>>,
}

impl<T> CollarReport<T> {
    pub fn passed(&self) -> bool {
        self.inner_pass == self.inner_samples && self.outer_pass == self.outer_samples
    }
}

/// Radii cycle through the two collar spheres and a uniform fill: inner radii `j/2`, `j`,
/// `U[0, j]`; outer radii `C_j/δ`, `2C_j/δ`, `U[C_j/δ, 3C_j/δ]`.
fn collar_radius<T: Real>(i: usize, lo: T, hi: T, rng: &mut rng::LabRng, inner: bool) -> T {
    let u = T::lit(rng.gen::<f64>());
    match (i % 3, inner) {
        (0, true) => hi / T::lit(2.0),
        (1, true) => hi,
        (_, true) => hi * u,
        (0, false) => lo,
        (1, false) => lo * T::lit(2.0),
        (_, false) => lo * (T::one() + T::lit(2.0) * u),
    }
}

pub fn verify_collar<T: Real>(
    op: &OperatorSpec<T>,
    params: DensityParams<T>,
    inner_samples: usize,
    outer_samples: usize,
    seed: u64,
) -> Result<CollarReport<T>> {
    let fj = fj_operator(op, params)?;
    let audit = audit_ellipticity(op, COLLAR_AUDIT_SAMPLES, T::one(), seed);
    if !audit.passed {
        return Err(LabError::Precondition(format!("{} fails its ellipticity audit", op.name())));
    }
    let dim = op.arity().unwrap_or(2);
    let inner_radius = T::lit(f64::from(params.j));
    let outer_radius = params.outer_radius();
    let mut rng = rng::stream(seed, "collar");
    let x: Option<Vec<T>> = op.x_dependent.then(|| vec![T::zero(); dim]);
    let mut report = CollarReport {
        j: params.j,
        cj: params.cj,
        inner_radius,
        outer_radius,
        inner_samples,
        outer_samples,
        inner_pass: 0,
        outer_pass: 0,
        inner_worst_margin: T::infinity(),
        outer_worst_margin: T::infinity(),
        inner_violations: Vec::new(),
        outer_violations: Vec::new(),
    };
    for (inner, count) in [(true, inner_samples), (false, outer_samples)] {
        for i in 0..count {
            let r = if inner {
                collar_radius(i, T::zero(), inner_radius, &mut rng, true)
            } else {
                collar_radius(i, outer_radius, T::zero(), &mut rng, false)
            };
            let e: Vec<T> = eigenvalues(&random_unit_direction::<T>(dim, &mut rng))?
                .values
                .into_iter()
                .map(|v| v * r)
                .collect();
            let f = op.eval_spectrum(x.as_deref(), &e)?;
            let (p, n) = signed_traces_of(&e);
            let shifted = (params.pair.big_lambda + params.delta) * p
                + (params.pair.lambda - params.delta) * n
                - params.cj;
            let value = fj.eval_spectrum(x.as_deref(), &e)?;
            let norm = e.iter().map(|v| v.abs()).sum();
            if inner {
                report.inner_worst_margin = report.inner_worst_margin.min(f - shifted);
                if value == f {
                    report.inner_pass += 1;
                } else {
                    report.inner_violations.push(CollarViolation { norm, fj: value, expected: f });
                }
            } else {
                report.outer_worst_margin = report.outer_worst_margin.min(shifted - f);
                if value == shifted {
                    report.outer_pass += 1;
                } else {
                    report.outer_violations.push(CollarViolation { norm, fj: value, expected: shifted });
                }
            }
        }
    }
    Ok(report)
}

/// `{2⁻¹, …, 2⁻⁴⁸}`: deep enough that the `μC_j` offset of the `L_δ` branch drops below 10⁻⁹
/// for `C_j` up to ~10⁵.
pub fn fj_mu_schedule<T: Real>() -> Vec<T> {
    geometric_schedule(T::lit(0.5), T::lit(0.5), 48)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FjRecession<T> {
    pub report: RecessionReport<T>,
    /// `δ/C_j`: below it every unit direction sits on the `L_δ` branch.
    pub branch_threshold_mu: T,
    /// `max_D |values − L_δ(D)|`.
    pub ldelta_deviation: T,
    /// `max |F^j_μ(D) − (L_δ(D) − μC_j)|` over schedule entries `μ ≤ δ/C_j`.
    pub branch_deviation: T,
    pub branch_points: usize,
}

pub fn recession_of_fj<T: Real>(
    op: &OperatorSpec<T>,
    params: DensityParams<T>,
    direction_count: usize,
    seed: u64,
    mu_schedule: &[T],
    tol: T,
) -> Result<FjRecession<T>> {
    let fj = fj_operator(op, params)?;
    let report = estimate_recession(&fj, direction_count, seed, mu_schedule, tol)?;
    let ldelta = OperatorSpec::extremal_ldelta(params.pair, params.delta)?;
    let exact = report
        .spectra
        .iter()
        .map(|e| ldelta.eval_spectrum(None, e))
        .collect::<Result<Vec<T>>>()?;
    let ldelta_deviation = exact
        .iter()
        .zip(&report.values)
        .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()));
    let threshold = params.delta / params.cj;
    let mut branch_deviation = T::zero();
    let mut branch_points = 0;
    for (k, &mu) in report.mu_schedule.iter().enumerate() {
        if mu <= threshold {
            branch_points += 1;
            for (&v, &l) in report.path[k].iter().zip(&exact) {
                branch_deviation = branch_deviation.max((v - (l - mu * params.cj)).abs());
            }
        }
    }
    Ok(FjRecession {
        report,
        branch_threshold_mu: threshold,
        ldelta_deviation,
        branch_deviation,
        branch_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::evaluate;
    use crate::recession::check_homogeneity;
    use crate::symmat::random_sym_with;

    fn pair() -> EllipticityPair<f64> {
        EllipticityPair::new(1.0, 2.0).unwrap()
    }

    #[test]
    fn ldelta_examples() {
        assert!((extremal_ldelta(&pair(), 0.1, &SymMat::diag(&[1.0, -1.0])).unwrap() - 1.2).abs() < 1e-15);
        assert_eq!(extremal_ldelta(&pair(), 0.3, &SymMat::zeros(2)).unwrap(), 0.0);
        assert_eq!(extremal_ldelta(&pair(), 0.5, &SymMat::identity(2)).unwrap(), 5.0);
        assert!(extremal_ldelta(&pair(), 0.0, &SymMat::identity(2)).is_err());
        assert!(extremal_ldelta(&pair(), 1.0, &SymMat::identity(2)).is_err());
    }

    #[test]
    fn cj_arithmetic() {
        let sine = OperatorSpec::<f64>::sine_perturbed(vec![1.0, 1.0]).unwrap();
        let p = DensityParams::new(sine.declared.pair().unwrap(), 0.5, 10).unwrap();
        assert_eq!(p.cj, 55.0);
        assert_eq!(DensityParams::new(pair(), 0.5, 10).unwrap().cj, 35.0);
        assert!(DensityParams::new(pair(), 1.0, 10).is_err());
        assert!(DensityParams::new(pair(), 0.5, 0).is_err());
        assert_eq!(default_delta(&pair()), 0.1);
    }

    #[test]
    fn fj_rejects_mismatched_metadata() {
        let q = OperatorSpec::<f64>::q_momentum(3, 2).unwrap();
        let p = DensityParams::new(pair(), 0.5, 10).unwrap();
        assert!(matches!(fj_operator(&q, p), Err(LabError::EllipticityMismatch(_))));
    }

    #[test]
    fn fj_hand_values() {
        let op = OperatorSpec::pucci_minus(pair());
        let fj = fj_operator(&op, DensityParams::new(pair(), 0.5, 10).unwrap()).unwrap();
        // max{70, 2.5·70 − 35}
        assert_eq!(evaluate(&fj, None, &SymMat::diag(&[70.0, 0.0])).unwrap(), 140.0);
        for j in [1, 3, 100] {
            let fj = fj_operator(&op, DensityParams::new(pair(), 0.5, j).unwrap()).unwrap();
            assert_eq!(evaluate(&fj, None, &SymMat::zeros(2)).unwrap(), 0.0);
        }
    }

    #[test]
    fn collar_identities_hold() {
        let op = OperatorSpec::pucci_minus(pair());
        let params = DensityParams::new(pair(), 0.5, 10).unwrap();
        let r = verify_collar(&op, params, 300, 300, 4).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.outer_radius, 70.0);
        // margins from the chain: C_j − 1.5‖M‖ at ‖M‖ = j, 1.5‖M‖ − C_j at ‖M‖ = C_j/δ
        assert!((r.inner_worst_margin - 20.0).abs() < 1e-9);
        assert!((r.outer_worst_margin - 70.0).abs() < 1e-9);

        let j1 = verify_collar(&op, DensityParams::new(pair(), 0.5, 1).unwrap(), 30, 30, 1).unwrap();
        assert!(j1.passed());
    }

    #[test]
    fn fj_structure_on_samples() {
        let sine = OperatorSpec::sine_perturbed(vec![1.0, 1.0]).unwrap();
        let sp = sine.declared.pair().unwrap();
        let mut rng = rng::stream(8, "fj");
        let fjs: Vec<_> = (1..=6)
            .map(|j| fj_operator(&sine, DensityParams::new(sp, 0.5, j).unwrap()).unwrap())
            .collect();
        for _ in 0..2000 {
            let m = random_sym_with(2, 20.0, &mut rng);
            let norm = crate::symmat::eigen_norm(&m).unwrap();
            let f = evaluate(&sine, None, &m).unwrap();
            let l = extremal_ldelta(&sp, 0.5, &m).unwrap();
            for (k, fj) in fjs.iter().enumerate() {
                let j = (k + 1) as f64;
                let cj = j * (2.0 * 3.0 - 1.0 + 0.5);
                let v = evaluate(fj, None, &m).unwrap();
                assert!(v >= f && v >= l - cj && (v == f || v == l - cj));
                if j >= norm {
                    assert_eq!(v, f);
                }
            }
        }
    }

    #[test]
    fn inner_collar_grows_with_j() {
        let op = OperatorSpec::pucci_minus(pair());
        let mut rng = rng::stream(12, "grow");
        for _ in 0..1000 {
            let m = random_sym_with(2, 15.0, &mut rng);
            let f = evaluate(&op, None, &m).unwrap();
            let mut passed = false;
            for j in 1..=20 {
                let fj = fj_operator(&op, DensityParams::new(pair(), 0.5, j).unwrap()).unwrap();
                let now = evaluate(&fj, None, &m).unwrap() == f;
                assert!(!passed || now, "agreement lost when going to j = {j}");
                passed = now;
            }
        }
    }

    #[test]
    fn fj_is_widened_elliptic() {
        let sine = OperatorSpec::sine_perturbed(vec![1.0, 1.0]).unwrap();
        let fj = fj_operator(&sine, DensityParams::new(sine.declared.pair().unwrap(), 0.5, 2).unwrap()).unwrap();
        let r = audit_ellipticity(&fj, 10_000, 20.0, 3);
        assert!(r.passed, "{} {}", r.empirical_lower, r.empirical_upper);
    }

    #[test]
    fn recession_of_fj_is_ldelta() {
        // oracle: ‖D‖ = 1 ≥ μC_j/δ once μ ≤ δ/C_j = 1/70
        let op = OperatorSpec::pucci_minus(pair());
        let params = DensityParams::new(pair(), 0.5, 10).unwrap();
        let r = recession_of_fj(&op, params, 256, 2, &fj_mu_schedule(), 1e-9).unwrap();
        assert!(r.report.converged);
        assert!((r.branch_threshold_mu - 1.0 / 70.0).abs() < 1e-15);
        assert!(r.ldelta_deviation <= 1e-9, "{}", r.ldelta_deviation);
        assert!(r.branch_deviation <= 1e-12, "{}", r.branch_deviation);
        assert!(r.branch_points >= 40);
        let h = check_homogeneity(&r.report, &fj_operator(&op, params).unwrap(), &[0.5, 2.0]).unwrap();
        assert!(h.max_discrepancy <= 1e-9);
    }
}
