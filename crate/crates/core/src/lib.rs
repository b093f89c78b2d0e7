//! Method-of-moments estimation of landmark mean form and covariance structure
//! under matrix elliptical laws.
//!
//! The crate is organised as a stack:
//!
//! * [`linalg`]: vec, Kronecker, commutation, Khatri-Rao and block-sum helpers.
//! * [`elliptical`]: density-generator families, their moment constants and a
//!   Monte Carlo sampler.
//! * [`moments`]: analytic moments of `vec Y` and of the Gram matrix `B = Y Y^T`.
//! * [`estimators`]: sample moments, closed-form moment estimators, mean-form
//!   reconstruction, the flip-flop algorithm and the unconstrained MLE.
//! * [`form`]: form-difference matrices and their bootstrap test.
//! * [`selection`]: covariance and shape distances between fitted models.
//! * [`pipeline`]: config-driven analysis of landmark datasets.

pub mod elliptical;
pub mod error;
pub mod estimators;
pub mod form;
pub mod linalg;
pub mod moments;
pub mod pipeline;
pub mod rng;
pub mod selection;

pub use elliptical::{EllipticalModel, MomentConstants};
pub use error::{Error, ErrorCategory, Result};
pub use linalg::Mat;
