use super::OperatorSpec;
use crate::error::{LabError, Result};
use crate::rng;
use crate::scalar::Real;
use crate::symmat::{eigenvalues, random_unit_direction};

/// Running supremum of `|F(x, M) − F(x₀, M)|` over sampled `M` with `‖M‖ = 1`.
///
/// The quotient by `‖M‖` is 0-homogeneous for every x-dependent catalog kind, so the unit sphere
/// is enough; the value approximates the supremum from below and is nondecreasing in
/// `sample_count` for a fixed seed.
pub fn oscillation_beta<T: Real>(
    op: &OperatorSpec<T>,
    x: &[T],
    x0: &[T],
    sample_count: usize,
    seed: u64,
) -> Result<T> {
    if !op.x_dependent {
        return Err(LabError::NotXDependent(op.name()));
    }
    let dim = op.arity().unwrap_or(2);
    let mut rng = rng::stream(seed, "oscillation");
    let mut beta = T::zero();
    for _ in 0..sample_count {
        let d = random_unit_direction::<T>(dim, &mut rng);
        let e = eigenvalues(&d)?.values;
        let gap = (op.eval_spectrum(Some(x), &e)? - op.eval_spectrum(Some(x0), &e)?).abs();
        beta = beta.max(gap);
    }
    Ok(beta)
}
