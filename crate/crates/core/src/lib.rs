//! Numerical laboratory for fully nonlinear uniformly elliptic operators.
//!
//! The matrix layer ([`symmat`], [`operators`], [`recession`], [`density`]) is generic over
//! [`Real`]; the grid layer ([`meshsolve`], [`diagnostics`]) runs on `f64`.

// `!(x > 0.0)` is the idiom here for rejecting NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod meshsolve;
pub mod operators;
pub mod recession;
pub mod rng;
pub mod scalar;
pub mod symmat;

pub use error::{LabError, Result};
pub use scalar::Real;

pub type SymMatrix = symmat::SymMat<f64>;
pub type SymMatrix32 = symmat::SymMat<f32>;
pub type Spectrum = symmat::Spectrum<f64>;
pub type Operator = operators::OperatorSpec<f64>;
pub type Operator32 = operators::OperatorSpec<f32>;
pub type EllipticityPair = operators::EllipticityPair<f64>;
pub type RecessionReport = recession::RecessionReport<f64>;
pub type CollarReport = density::CollarReport<f64>;
