//! Contact order, polynomial Wolff certificates and curved Kakeya tube
//! diagnostics for Hörmander phase functions.
//!
//! Everything analytic is generic over [`scalar::Scalar`]: the exact backend
//! is [`Rational`] and the float backends are `f64` and `f32`. Randomised
//! routines take an explicit seed.

pub mod combinatorics;
pub mod contact;
pub mod error;
pub mod exponents;
pub mod io;
pub mod jet;
pub mod linalg;
pub mod optimize;
pub mod phase;
pub mod quadrature;
pub mod riemannian;
pub mod rng;
pub mod scalar;
pub mod tubes;
pub mod wolff;

pub use error::{Error, Result};
pub use jet::{ExactJet, FloatJet, Jet, MultiIndex};
pub use phase::{ExactPhase, FloatPhase, Phase};
pub use riemannian::{ExactMetric, MetricJet3};
pub use scalar::{Rational, Scalar};

pub type ExactMat = linalg::Mat<Rational>;
pub type FloatMat = linalg::Mat<f64>;
