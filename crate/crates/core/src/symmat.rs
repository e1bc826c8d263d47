//! Real symmetric matrices and their spectra.
//!
//! A [`SymMat`] stores the upper triangle row by row; the lower triangle is its reflection, so
//! symmetry never has to be checked once a value exists. Eigenvalues use the quadratic formula
//! for `d = 2` and cyclic Jacobi rotations otherwise. The canonical norm is the eigenvalue sum
//! `‖M‖ = Σ|eᵢ|`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::rng::{self, LabRng};
use crate::scalar::Real;

/// Maximum number of cyclic Jacobi sweeps before giving up.
pub const MAX_JACOBI_SWEEPS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMat<T> {
    dim: usize,
    upper: Vec<T>,
}

#[inline]
fn packed_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * dim - i * i.saturating_sub(1) / 2 + (j - i)
}

impl<T: Real> SymMat<T> {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, upper: vec![T::zero(); dim * (dim + 1) / 2] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diag(&vec![T::one(); dim])
    }

    pub fn diag(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Builds a matrix from its packed upper triangle (row-major, `i ≤ j`).
    pub fn from_upper(dim: usize, upper: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(LabError::UnsupportedDim(0));
        }
        let expected = dim * (dim + 1) / 2;
        if upper.len() != expected {
            return Err(LabError::DimMismatch { expected, got: upper.len() });
        }
        Ok(Self { dim, upper })
    }

    /// Builds a matrix from full rows; the rows must be exactly symmetric.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(LabError::UnsupportedDim(0));
        }
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(LabError::DimMismatch { expected: dim, got: row.len() });
            }
            for j in i..dim {
                if row[j] != rows[j][i] {
                    return Err(LabError::NotSymmetric(i, j));
                }
                m.set(i, j, row[j]);
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.upper[packed_index(self.dim, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let k = packed_index(self.dim, i, j);
        self.upper[k] = v;
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn scale(&self, t: T) -> Self {
        Self { dim: self.dim, upper: self.upper.iter().map(|&v| v * t).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            upper: self.upper.iter().zip(&other.upper).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-T::one()))
    }

    pub fn neg(&self) -> Self {
        self.scale(-T::one())
    }

    pub fn is_zero(&self) -> bool {
        self.upper.iter().all(|v| v.is_zero())
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.upper.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        (0..self.dim).map(|i| (0..self.dim).map(|j| self.get(i, j)).collect()).collect()
    }

    /// `Qᵀ D Q` for a diagonal `D` and square `Q` (row-major rows).
    pub fn conjugated_diag(diag: &[T], q: &[Vec<T>]) -> Self {
        let d = diag.len();
        let mut m = Self::zeros(d);
        for i in 0..d {
            for j in i..d {
                let v = (0..d).map(|k| q[k][i] * diag[k] * q[k][j]).sum();
                m.set(i, j, v);
            }
        }
        m
    }

    /// `Qᵀ M Q` for square `Q`.
    pub fn conjugate(&self, q: &[Vec<T>]) -> Self {
        let d = self.dim;
        let full = self.to_dense();
        let mut m = Self::zeros(d);
        for i in 0..d {
            for j in i..d {
                let mut v = T::zero();
                for k in 0..d {
                    for l in 0..d {
                        v = v + q[k][i] * full[k][l] * q[l][j];
                    }
                }
                m.set(i, j, v);
            }
        }
        m
    }
}

/// Eigenvalues in nonincreasing order plus the characteristic-polynomial residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum<T> {
    pub values: Vec<T>,
    pub residual: T,
}

impl<T: Real> Spectrum<T> {
    pub fn max(&self) -> T {
        self.values[0]
    }

    pub fn min(&self) -> T {
        self.values[self.values.len() - 1]
    }

    pub fn abs_sum(&self) -> T {
        self.values.iter().map(|v| v.abs()).sum()
    }
}

pub fn eigenvalues<T: Real>(m: &SymMat<T>) -> Result<Spectrum<T>> {
    let mut values = match m.dim() {
        0 => return Err(LabError::UnsupportedDim(0)),
        1 => vec![m.get(0, 0)],
        2 => closed_form_2x2(m).to_vec(),
        _ => jacobi_values(m)?,
    };
    sort_desc(&mut values);
    let residual = char_poly_residual(m, &values);
    Ok(Spectrum { values, residual })
}

/// Eigenvalues by cyclic Jacobi for every dimension, including `d = 2`; used to cross-check the
/// closed form.
pub fn eigenvalues_jacobi<T: Real>(m: &SymMat<T>) -> Result<Spectrum<T>> {
    let mut values = jacobi_values(m)?;
    sort_desc(&mut values);
    let residual = char_poly_residual(m, &values);
    Ok(Spectrum { values, residual })
}

fn sort_desc<T: Real>(values: &mut [T]) {
    values.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
}

fn closed_form_2x2<T: Real>(m: &SymMat<T>) -> [T; 2] {
    let (a, b, c) = (m.get(0, 0), m.get(0, 1), m.get(1, 1));
    let two = T::lit(2.0);
    let mean = (a + c) / two;
    let radius = ((a - c) / two).hypot(b);
    let det = a * c - b * b;
    // the root of smaller magnitude comes from the determinant to avoid cancellation
    if mean >= T::zero() {
        let hi = mean + radius;
        let lo = if hi.is_zero() { mean - radius } else { det / hi };
        [hi, lo]
    } else {
        let lo = mean - radius;
        [det / lo, lo]
    }
}

fn jacobi_values<T: Real>(m: &SymMat<T>) -> Result<Vec<T>> {
    let n = m.dim();
    let mut a = m.to_dense();
    let norm = a.iter().flatten().map(|v| v.abs()).sum::<T>();
    if norm.is_zero() {
        return Ok(vec![T::zero(); n]);
    }
    let tol = T::tol(1e-13) * norm;
    let two = T::lit(2.0);
    for _sweep in 0..MAX_JACOBI_SWEEPS {
        let off: T = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j].abs())
            .sum();
        if off < tol {
            return Ok((0..n).map(|i| a[i][i]).collect());
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq.is_zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                a[p][q] = T::zero();
                a[q][p] = T::zero();
            }
        }
    }
    Err(LabError::NoConvergence(MAX_JACOBI_SWEEPS))
}

/// `max_i |det(eᵢI − M)| / (1 + max|e|)^(d−1)`, i.e. the characteristic polynomial at each
/// computed root, scaled to eigenvalue units.
fn char_poly_residual<T: Real>(m: &SymMat<T>, values: &[T]) -> T {
    let n = m.dim();
    let big = values.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let scale = (T::one() + big).powi(n as i32 - 1);
    values
        .iter()
        .map(|&e| {
            let mut a = m.to_dense();
            for (i, row) in a.iter_mut().enumerate() {
                for v in row.iter_mut() {
                    *v = -*v;
                }
                row[i] = row[i] + e;
            }
            determinant(a).abs() / scale
        })
        .fold(T::zero(), |acc, v| acc.max(v))
}

fn determinant<T: Real>(mut a: Vec<Vec<T>>) -> T {
    let n = a.len();
    let mut det = T::one();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].is_zero() {
            return T::zero();
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det = det * a[col][col];
        for i in (col + 1)..n {
            let f = a[i][col] / a[col][col];
            for k in col..n {
                a[i][k] = a[i][k] - f * a[col][k];
            }
        }
    }
    det
}

/// Σ|eᵢ| over the spectrum.
pub fn eigen_norm<T: Real>(m: &SymMat<T>) -> Result<T> {
    Ok(eigenvalues(m)?.abs_sum())
}

/// Threshold below which an eigenvalue counts as zero for the positive/negative split.
#[inline]
pub fn zero_threshold<T: Real>(norm: T) -> T {
    T::tol(1e-14) * (T::one() + norm)
}

/// `(Σ_{e>0} e, Σ_{e<0} e)` from an already computed spectrum.
pub fn signed_traces_of<T: Real>(values: &[T]) -> (T, T) {
    let norm: T = values.iter().map(|v| v.abs()).sum();
    let zero = zero_threshold(norm);
    values.iter().fold((T::zero(), T::zero()), |(p, n), &e| {
        if e > zero {
            (p + e, n)
        } else if e < -zero {
            (p, n + e)
        } else {
            (p, n)
        }
    })
}

/// `(trace_plus ≥ 0, trace_minus ≤ 0)`; eigenvalues within the zero threshold count for neither.
pub fn signed_traces<T: Real>(m: &SymMat<T>) -> Result<(T, T)> {
    Ok(signed_traces_of(&eigenvalues(m)?.values))
}

/// Entries uniform on `[−scale, scale]` from the `"random_sym"` purpose stream of `seed`
/// (ChaCha8, see [`crate::rng`]).
pub fn random_sym<T: Real>(dim: usize, scale: T, seed: u64) -> Result<SymMat<T>> {
    if !(1..=3).contains(&dim) {
        return Err(LabError::UnsupportedDim(dim));
    }
    if !(scale >= T::zero()) || !scale.is_finite() {
        return Err(LabError::InvalidParameter(format!("scale must be finite and ≥ 0, got {scale}")));
    }
    let mut rng = rng::stream(seed, "random_sym");
    Ok(random_sym_with(dim, scale, &mut rng))
}

pub fn random_sym_with<T: Real>(dim: usize, scale: T, rng: &mut LabRng) -> SymMat<T> {
    let upper = (0..dim * (dim + 1) / 2)
        .map(|_| T::lit(rng.gen_range(-1.0..=1.0)) * scale)
        .collect();
    SymMat { dim, upper }
}

/// Uniformly distributed rotation (Haar measure on SO(d)) via Gram–Schmidt of a Gaussian-like
/// matrix. Rows are the rotated basis vectors.
pub fn random_rotation<T: Real>(dim: usize, rng: &mut LabRng) -> Vec<Vec<T>> {
    loop {
        let mut q: Vec<Vec<f64>> = (0..dim)
            .map(|_| (0..dim).map(|_| standard_normal(rng)).collect())
            .collect();
        let mut ok = true;
        for i in 0..dim {
            for j in 0..i {
                let dot: f64 = (0..dim).map(|k| q[i][k] * q[j][k]).sum();
                for k in 0..dim {
                    q[i][k] -= dot * q[j][k];
                }
            }
            let n: f64 = q[i].iter().map(|v| v * v).sum::<f64>().sqrt();
            if n < 1e-8 {
                ok = false;
                break;
            }
            q[i].iter_mut().for_each(|v| *v /= n);
        }
        if ok {
            return q.into_iter().map(|r| r.into_iter().map(T::lit).collect()).collect();
        }
    }
}

fn standard_normal(rng: &mut LabRng) -> f64 {
    // Box–Muller; one draw is enough here
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// A direction on the unit sphere `‖D‖ = 1`: uniform diagonal entries on `[−1, 1]`, rotated by a
/// random rotation and normalised.
pub fn random_unit_direction<T: Real>(dim: usize, rng: &mut LabRng) -> SymMat<T> {
    loop {
        let diag: Vec<T> = (0..dim).map(|_| T::lit(rng.gen_range(-1.0..=1.0))).collect();
        let norm: T = diag.iter().map(|v| v.abs()).sum();
        if norm > T::lit(1e-6) {
            let q = random_rotation(dim, rng);
            let scaled: Vec<T> = diag.iter().map(|&v| v / norm).collect();
            return SymMat::conjugated_diag(&scaled, &q);
        }
    }
}

/// A positive semidefinite matrix `QᵀDQ` with `D` uniform on `[0, scale]`.
pub fn random_psd<T: Real>(dim: usize, scale: T, rng: &mut LabRng) -> SymMat<T> {
    let diag: Vec<T> = (0..dim).map(|_| T::lit(rng.gen_range(0.0..=1.0)) * scale).collect();
    let q = random_rotation(dim, rng);
    SymMat::conjugated_diag(&diag, &q)
}
