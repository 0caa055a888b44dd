//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension {0}: need n >= 3")]
    InvalidDimension(usize),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("accuracy: achieved error bound {achieved:.3e} exceeds tolerance {requested:.3e}")]
    Accuracy { achieved: f64, requested: f64 },
    #[error("shape mismatch: expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("cut locus: distance {distance} is not below the injectivity radius {radius}")]
    CutLocus { distance: f64, radius: f64 },
    #[error("no convergence after {iterations} iterations (relative residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("coercivity failure: Ritz value {0:.3e} of the projected operator")]
    Coercivity(f64),
    #[error("resolution: scale {scale} is below {required} grid spacings of {spacing}")]
    Resolution { scale: f64, spacing: f64, required: f64 },
    #[error("configuration degenerate: {0}")]
    Degenerate(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("classification: {0}")]
    Classification(String),
    #[error("coefficient budget exceeded: sum |c| = {total} > {budget}")]
    Budget { total: f64, budget: f64 },
    #[error("index {index} out of range (size {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("no contraction: factor {factor:.3} at Picard iteration {iteration}")]
    NoContraction { factor: f64, iteration: usize },
    #[error("estimate violation: ratio {ratio:.3e} at grid index {index}")]
    EstimateViolation { ratio: f64, index: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
