use thiserror::Error;

/// Every failure the numeric core can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate metric at {0:?}")]
    DegenerateMetric([f64; 4]),
    #[error("matrix is not an almost complex structure (|J²+I| = {0:e})")]
    InvalidStructure(f64),
    #[error("metrics are not comparable: eigenvalue {0:e} of g⁻¹g̃ is not positive")]
    NotComparable(f64),
    #[error("left the chart domain at t = {exit_time} (point {point:?})")]
    OutOfDomain { exit_time: f64, point: [f64; 4] },
    #[error("geodesic shooting failed after {iterations} iterations (residual {residual:e})")]
    ShootingFailure { iterations: usize, residual: f64 },
    #[error("point lies within the puncture radius {0:e} of the base point")]
    SingularPoint(f64),
    #[error("coframe degenerates (Gram–Schmidt denominator {0:e})")]
    FrameDegeneracy(f64),
    #[error("axis point: polar frame undefined at r = {r}, rho = {rho}")]
    Axis { r: f64, rho: f64 },
    #[error("profile construction failed: {0}")]
    Profile(String),
    #[error("parameters not found: {0}")]
    ParametersNotFound(String),
    #[error("invalid deformation parameters: {0}")]
    InvalidParams(String),
    #[error("covering net invalid: {0}")]
    NetInvalid(String),
    #[error("surgery failed at center {center:?}: {reason}")]
    Surgery { center: [f64; 4], reason: String },
    #[error("iteration failed: {0}")]
    Iteration(String),
    #[error("gate failed: {0}")]
    Gate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
