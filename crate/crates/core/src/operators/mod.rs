//! The operator catalog.
//!
//! Every operator here is a function of `x` and of the Hessian spectrum only, so evaluation goes
//! through [`OperatorSpec::eval_spectrum`]; [`evaluate`] is the matrix-level entry point.

mod audit;
mod oscillation;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::scalar::Real;
use crate::symmat::{eigenvalues, signed_traces_of, SymMat};

pub use audit::{audit_ellipticity, audit_ellipticity_in, EllipticityReport, AUDIT_TOLERANCE, DEGENERACY_FLOOR};
pub use oscillation::oscillation_beta;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityPair<T> {
    pub lambda: T,
    #[serde(rename = "Lambda")]
    pub big_lambda: T,
}

impl<T: Real> EllipticityPair<T> {
    pub fn new(lambda: T, big_lambda: T) -> Result<Self> {
        if !(lambda > T::zero()) || !(big_lambda >= lambda) || !big_lambda.is_finite() {
            return Err(LabError::InvalidParameter(format!(
                "ellipticity pair needs 0 < lambda <= Lambda, got ({lambda}, {big_lambda})"
            )));
        }
        Ok(Self { lambda, big_lambda })
    }
}

/// Declared ellipticity metadata. Evaluation never relies on it; the auditor checks it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Declared<T> {
    Pair(EllipticityPair<T>),
    Degenerate,
}

impl<T: Real> Declared<T> {
    pub fn pair(&self) -> Option<EllipticityPair<T>> {
        match self {
            Declared::Pair(p) => Some(*p),
            Declared::Degenerate => None,
        }
    }
}

/// Coefficient profiles `a(x)` for [`OperatorKind::LinearVariable`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Coefficient<T> {
    Constant(T),
    /// `a(x) = base + slope·|x|`, declared on `|x| ≤ radius`.
    Radial { base: T, slope: T, radius: T },
}

impl<T: Real> Coefficient<T> {
    pub fn at(&self, x: &[T]) -> T {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Radial { base, slope, .. } => {
                let r = x.iter().map(|&v| v * v).sum::<T>().sqrt();
                *base + *slope * r
            }
        }
    }

    fn bounds(&self) -> (T, T) {
        match self {
            Coefficient::Constant(c) => (*c, *c),
            Coefficient::Radial { base, slope, radius } => {
                let far = *base + *slope * *radius;
                (base.min(far), base.max(far))
            }
        }
    }
}

/// Parameters of the widened-operator construction `F^j = max{F, L_δ − C_j}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityParams<T> {
    pub pair: EllipticityPair<T>,
    pub delta: T,
    pub j: u32,
    pub cj: T,
}

impl<T: Real> DensityParams<T> {
    pub fn new(pair: EllipticityPair<T>, delta: T, j: u32) -> Result<Self> {
        if !(delta > T::zero() && delta < pair.lambda) {
            return Err(LabError::InvalidParameter(format!(
                "delta must lie in (0, lambda = {}), got {delta}",
                pair.lambda
            )));
        }
        if j < 1 {
            return Err(LabError::InvalidParameter("j must be >= 1".into()));
        }
        let cj = T::lit(f64::from(j))
            * (T::lit(2.0) * pair.big_lambda - pair.lambda + delta);
        Ok(Self { pair, delta, j, cj })
    }

    /// The outer collar radius `C_j/δ`.
    pub fn outer_radius(&self) -> T {
        self.cj / self.delta
    }
}

/// Sampled recession table turned into a 2-D spectral operator.
///
/// Each sample is stored by its position `s` along the unit diamond `{a ≥ b, |a| + |b| = 1}` of
/// sorted eigenvalue pairs, walked from `(½, ½)` through `(1, 0)` and `(0, −1)` to `(−½, −½)`;
/// off-sample values interpolate linearly in `s` and extend 1-homogeneously.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralTable<T> {
    pub positions: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Real> SpectralTable<T> {
    /// Diamond arclength parameter in `[0, 3]` (unit speed per edge) of a sorted pair with
    /// `|a| + |b| = 1`.
    pub fn position(a: T, b: T) -> T {
        let half = T::lit(0.5);
        if b >= T::zero() {
            // edge (½,½) → (1,0)
            (a - half) / half
        } else if a >= T::zero() {
            // edge (1,0) → (0,−1)
            T::one() + (T::one() - a)
        } else {
            // edge (0,−1) → (−½,−½)
            T::lit(2.0) + (-a) / half
        }
    }

    pub fn from_samples(mut samples: Vec<(T, T)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(LabError::InvalidParameter("spectral table needs >= 2 samples".into()));
        }
        samples.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        samples.dedup_by(|x, y| x.0 == y.0);
        let (positions, values) = samples.into_iter().unzip();
        Ok(Self { positions, values })
    }

    fn lookup(&self, s: T) -> T {
        let p = &self.positions;
        let k = p.partition_point(|&v| v < s).clamp(1, p.len() - 1);
        let (s0, s1) = (p[k - 1], p[k]);
        let w = (s - s0) / (s1 - s0);
        self.values[k - 1] + w * (self.values[k] - self.values[k - 1])
    }

    pub fn eval(&self, a: T, b: T) -> T {
        let norm = a.abs() + b.abs();
        if norm.is_zero() {
            return T::zero();
        }
        norm * self.lookup(Self::position(a / norm, b / norm))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorKind<T> {
    PucciPlus { pair: EllipticityPair<T> },
    PucciMinus { pair: EllipticityPair<T> },
    #[serde(rename = "extremal_Ldelta")]
    ExtremalLdelta { pair: EllipticityPair<T>, delta: T },
    QMomentum { q: u32, dim: usize },
    PerturbedLagrangian { alpha: Vec<T> },
    SinePerturbed { alpha: Vec<T> },
    /// `inner` on `‖M‖ < radius`, `outer` elsewhere.
    Splice { inner: Box<OperatorSpec<T>>, outer: Box<OperatorSpec<T>>, radius: T },
    LinearVariable { coefficient: Coefficient<T> },
    FjWrapper { base: Box<OperatorSpec<T>>, params: DensityParams<T> },
    /// `Σ wᵢ eᵢ` over nonincreasing eigenvalues; the closed-form recession of the
    /// eigenvalue-perturbation examples.
    WeightedTrace { weights: Vec<T> },
    /// `μ·F(x, μ⁻¹M)`.
    MuScaled { base: Box<OperatorSpec<T>>, mu: T },
    Tabulated { table: SpectralTable<T> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec<T> {
    pub kind: OperatorKind<T>,
    pub declared: Declared<T>,
    pub x_dependent: bool,
}

fn positive_weights<T: Real>(alpha: &[T]) -> Result<()> {
    if alpha.is_empty() || alpha.iter().any(|a| !(*a > T::zero()) || !a.is_finite()) {
        return Err(LabError::InvalidParameter("alpha needs at least one entry, all > 0".into()));
    }
    Ok(())
}

fn min_max<T: Real>(v: &[T]) -> (T, T) {
    v.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &a| (lo.min(a), hi.max(a)))
}

/// Real `q`-th root that keeps the sign for odd `q`.
#[inline]
fn signed_root<T: Real>(v: T, q: u32) -> T {
    let inv = T::one() / T::lit(f64::from(q));
    if v < T::zero() {
        -(-v).powf(inv)
    } else {
        v.powf(inv)
    }
}

impl<T: Real> OperatorSpec<T> {
    pub fn pucci_plus(pair: EllipticityPair<T>) -> Self {
        Self { kind: OperatorKind::PucciPlus { pair }, declared: Declared::Pair(pair), x_dependent: false }
    }

    pub fn pucci_minus(pair: EllipticityPair<T>) -> Self {
        Self { kind: OperatorKind::PucciMinus { pair }, declared: Declared::Pair(pair), x_dependent: false }
    }

    pub fn extremal_ldelta(pair: EllipticityPair<T>, delta: T) -> Result<Self> {
        if !(delta > T::zero() && delta < pair.lambda) {
            return Err(LabError::InvalidParameter(format!(
                "delta must lie in (0, lambda = {}), got {delta}",
                pair.lambda
            )));
        }
        let widened = EllipticityPair::new(pair.lambda - delta, pair.big_lambda + delta)?;
        Ok(Self {
            kind: OperatorKind::ExtremalLdelta { pair, delta },
            declared: Declared::Pair(widened),
            x_dependent: false,
        })
    }

    /// The eigenvalue `q`-momentum operator. Declared degenerate: its 1-D symbol has zero slope at
    /// the origin.
    pub fn q_momentum(q: u32, dim: usize) -> Result<Self> {
        if q < 3 || q % 2 == 0 {
            return Err(LabError::InvalidParameter(format!("q must be an odd integer >= 3, got {q}")));
        }
        if dim == 0 {
            return Err(LabError::UnsupportedDim(0));
        }
        Ok(Self { kind: OperatorKind::QMomentum { q, dim }, declared: Declared::Degenerate, x_dependent: false })
    }

    pub fn perturbed_lagrangian(alpha: Vec<T>) -> Result<Self> {
        positive_weights(&alpha)?;
        let (lo, hi) = min_max(&alpha);
        let declared = Declared::Pair(EllipticityPair::new(lo, hi + T::one())?);
        Ok(Self { kind: OperatorKind::PerturbedLagrangian { alpha }, declared, x_dependent: false })
    }

    /// Declared `(min α, max α + 2)`, the exact range of the 1-D symbol's slope.
    pub fn sine_perturbed(alpha: Vec<T>) -> Result<Self> {
        positive_weights(&alpha)?;
        let (lo, hi) = min_max(&alpha);
        let declared = Declared::Pair(EllipticityPair::new(lo, hi + T::lit(2.0))?);
        Ok(Self { kind: OperatorKind::SinePerturbed { alpha }, declared, x_dependent: false })
    }

    /// A jump across `‖M‖ = radius` has no uniform pair, so the splice is declared degenerate.
    pub fn splice(inner: Self, outer: Self, radius: T) -> Result<Self> {
        if !(radius > T::zero()) {
            return Err(LabError::InvalidParameter(format!("splice radius must be > 0, got {radius}")));
        }
        let x_dependent = inner.x_dependent || outer.x_dependent;
        Ok(Self {
            kind: OperatorKind::Splice { inner: Box::new(inner), outer: Box::new(outer), radius },
            declared: Declared::Degenerate,
            x_dependent,
        })
    }

    pub fn linear_variable(coefficient: Coefficient<T>) -> Result<Self> {
        let (lo, hi) = coefficient.bounds();
        let declared = match EllipticityPair::new(lo, hi) {
            Ok(p) => Declared::Pair(p),
            Err(_) => Declared::Degenerate,
        };
        Ok(Self { kind: OperatorKind::LinearVariable { coefficient }, declared, x_dependent: true })
    }

    pub fn weighted_trace(weights: Vec<T>) -> Result<Self> {
        positive_weights(&weights)?;
        let (lo, hi) = min_max(&weights);
        let declared = Declared::Pair(EllipticityPair::new(lo, hi)?);
        Ok(Self { kind: OperatorKind::WeightedTrace { weights }, declared, x_dependent: false })
    }

    /// A tabulated 2-D spectral operator inheriting the declared pair of its source.
    pub fn tabulated(table: SpectralTable<T>, declared: Declared<T>) -> Self {
        Self { kind: OperatorKind::Tabulated { table }, declared, x_dependent: false }
    }

    pub fn name(&self) -> &'static str {
        match &self.kind {
            OperatorKind::PucciPlus { .. } => "pucci_plus",
            OperatorKind::PucciMinus { .. } => "pucci_minus",
            OperatorKind::ExtremalLdelta { .. } => "extremal_Ldelta",
            OperatorKind::QMomentum { .. } => "q_momentum",
            OperatorKind::PerturbedLagrangian { .. } => "perturbed_lagrangian",
            OperatorKind::SinePerturbed { .. } => "sine_perturbed",
            OperatorKind::Splice { .. } => "splice",
            OperatorKind::LinearVariable { .. } => "linear_variable",
            OperatorKind::FjWrapper { .. } => "fj_wrapper",
            OperatorKind::WeightedTrace { .. } => "weighted_trace",
            OperatorKind::MuScaled { .. } => "mu_scaled",
            OperatorKind::Tabulated { .. } => "tabulated",
        }
    }

    /// The matrix dimension the parameters pin down, if any.
    pub fn arity(&self) -> Option<usize> {
        match &self.kind {
            OperatorKind::QMomentum { dim, .. } => Some(*dim),
            OperatorKind::PerturbedLagrangian { alpha } | OperatorKind::SinePerturbed { alpha } => {
                Some(alpha.len())
            }
            OperatorKind::WeightedTrace { weights } => Some(weights.len()),
            OperatorKind::Tabulated { .. } => Some(2),
            OperatorKind::Splice { inner, outer, .. } => inner.arity().or(outer.arity()),
            OperatorKind::FjWrapper { base, .. } | OperatorKind::MuScaled { base, .. } => base.arity(),
            _ => None,
        }
    }

    /// Evaluates from nonincreasing eigenvalues. `x` is required iff the operator is
    /// x-dependent.
    pub fn eval_spectrum(&self, x: Option<&[T]>, e: &[T]) -> Result<T> {
        if let Some(d) = self.arity() {
            if d != e.len() {
                return Err(LabError::DimMismatch { expected: d, got: e.len() });
            }
        }
        if self.x_dependent && x.is_none() {
            return Err(LabError::MissingPoint(self.name()));
        }
        Ok(self.eval_unchecked(x, e))
    }

    pub(crate) fn eval_unchecked(&self, x: Option<&[T]>, e: &[T]) -> T {
        match &self.kind {
            OperatorKind::PucciPlus { pair } => {
                let (p, n) = signed_traces_of(e);
                pair.big_lambda * p + pair.lambda * n
            }
            OperatorKind::PucciMinus { pair } => {
                let (p, n) = signed_traces_of(e);
                pair.lambda * p + pair.big_lambda * n
            }
            OperatorKind::ExtremalLdelta { pair, delta } => ldelta_of(pair, *delta, e),
            OperatorKind::QMomentum { q, .. } => {
                let sum: T = e.iter().map(|&l| signed_root(T::one() + l.powi(*q as i32), *q)).sum();
                sum - T::lit(e.len() as f64)
            }
            OperatorKind::PerturbedLagrangian { alpha } => {
                alpha.iter().zip(e).map(|(&a, &l)| a * l + l.atan()).sum()
            }
            OperatorKind::SinePerturbed { alpha } => {
                alpha.iter().zip(e).map(|(&a, &l)| (T::one() + a) * l + l.sin()).sum()
            }
            OperatorKind::Splice { inner, outer, radius } => {
                let norm: T = e.iter().map(|v| v.abs()).sum();
                if norm < *radius {
                    inner.eval_unchecked(x, e)
                } else {
                    outer.eval_unchecked(x, e)
                }
            }
            OperatorKind::LinearVariable { coefficient } => {
                let a = coefficient.at(x.unwrap_or(&[]));
                a * e.iter().copied().sum::<T>()
            }
            OperatorKind::FjWrapper { base, params } => {
                let f = base.eval_unchecked(x, e);
                f.max(ldelta_of(&params.pair, params.delta, e) - params.cj)
            }
            OperatorKind::WeightedTrace { weights } => {
                weights.iter().zip(e).map(|(&w, &l)| w * l).sum()
            }
            OperatorKind::MuScaled { base, mu } => {
                let scaled: Vec<T> = e.iter().map(|&l| l / *mu).collect();
                *mu * base.eval_unchecked(x, &scaled)
            }
            OperatorKind::Tabulated { table } => table.eval(e[0], e[e.len() - 1]),
        }
    }

    /// Closed-form recession function where the catalog knows one.
    pub fn closed_form_recession(&self) -> Option<OperatorSpec<T>> {
        match &self.kind {
            OperatorKind::PucciPlus { .. }
            | OperatorKind::PucciMinus { .. }
            | OperatorKind::ExtremalLdelta { .. }
            | OperatorKind::WeightedTrace { .. }
            | OperatorKind::LinearVariable { .. } => Some(self.clone()),
            OperatorKind::QMomentum { dim, .. } => Self::weighted_trace(vec![T::one(); *dim]).ok(),
            OperatorKind::PerturbedLagrangian { alpha } => Self::weighted_trace(alpha.clone()).ok(),
            OperatorKind::SinePerturbed { alpha } => {
                Self::weighted_trace(alpha.iter().map(|&a| T::one() + a).collect()).ok()
            }
            OperatorKind::Splice { outer, .. } => outer.closed_form_recession(),
            OperatorKind::FjWrapper { params, .. } => {
                Self::extremal_ldelta(params.pair, params.delta).ok()
            }
            OperatorKind::MuScaled { base, .. } => base.closed_form_recession(),
            OperatorKind::Tabulated { .. } => None,
        }
    }
}

fn ldelta_of<T: Real>(pair: &EllipticityPair<T>, delta: T, e: &[T]) -> T {
    let (p, n) = signed_traces_of(e);
    (pair.big_lambda + delta) * p + (pair.lambda - delta) * n
}

/// `F(x, M)` through the spectrum of `M`.
pub fn evaluate<T: Real>(op: &OperatorSpec<T>, x: Option<&[T]>, m: &SymMat<T>) -> Result<T> {
    let spectrum = eigenvalues(m)?;
    op.eval_spectrum(x, &spectrum.values)
}

pub fn pucci_plus<T: Real>(pair: &EllipticityPair<T>, m: &SymMat<T>) -> Result<T> {
    evaluate(&OperatorSpec::pucci_plus(*pair), None, m)
}

pub fn pucci_minus<T: Real>(pair: &EllipticityPair<T>, m: &SymMat<T>) -> Result<T> {
    evaluate(&OperatorSpec::pucci_minus(*pair), None, m)
}
