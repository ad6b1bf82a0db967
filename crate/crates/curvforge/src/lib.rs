//! Numerical laboratory for almost Kähler metrics of negative scalar
//! curvature on four-dimensional charts and on the flat 4-torus.
//!
//! The geometry kernels are generic over [`Scalar`]; the aliases below fix
//! the concrete types used throughout the artifact.

pub mod coframe_deform;
pub mod error;
pub mod extended;
pub mod geodesy;
pub mod island;
pub mod jet;
pub mod linalg;
pub mod quadrature;
pub mod scalar;
pub mod surgery_pipeline;
pub mod tensor_core;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Working precision.
pub type Real = f64;
/// Exact first derivatives at working precision.
pub type Grad = jet::Jet1<Real>;
/// Exact second derivatives at working precision.
pub type Hess = jet::Jet2<Real>;
/// Second derivatives carrying a first-order perturbation channel.
pub type PerturbHess = jet::Jet2<jet::Dual<Real>>;
