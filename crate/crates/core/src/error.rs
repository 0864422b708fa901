use thiserror::Error;

/// Errors produced by the estimation, fitting and classification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("plane alignment failed: max |z| = {max_z:.3e} exceeds {limit:.3e}")]
    AlignmentFailure { max_z: f64, limit: f64 },
    #[error("degenerate motion: all displacements below {0:e} m")]
    DegenerateMotion(f64),
    #[error("straight-line motion: |delta| = {0:.3e} rad is below the curvature threshold")]
    StraightLine(f64),
    #[error("process model singular: {0}")]
    Singularity(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("invalid initialization: {0}")]
    InvalidInitialization(String),
    #[error("incomplete loop: {0}")]
    IncompleteLoop(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite2(x: f64, y: f64) -> Result<()> {
    if x.is_finite() && y.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("non-finite coordinate ({x}, {y})")))
    }
}
