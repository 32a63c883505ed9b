use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A polynomial or special-function value left the representable range.
    #[error("range error: {0}")]
    Range(String),

    /// The wavefunction does not decay to the required level at the grid edges.
    #[error("grid does not support the state: boundary amplitude {amplitude:e} exceeds {limit:e}")]
    GridSupport { amplitude: f64, limit: f64 },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("surface axes do not match")]
    AxisMismatch,

    #[error("composite Simpson rule needs an odd number of samples, got {0}")]
    EvenSampleCount(usize),

    #[error("Fock truncation leaves tail mass {tail:e} above tolerance {tolerance:e}")]
    Truncation { tail: f64, tolerance: f64 },

    #[error("outcome (y_in = {y_in}, e1 = {e1}) has zero probability")]
    ZeroProbability { y_in: f64, e1: f64 },

    /// Cubic-phase protocol outcome with Y1/(3 gamma g) < 0: the corrective
    /// momentum displacement is undefined there.
    #[error("outcome (y_in = {y_in}, y1 = {y1}) lies outside the working area")]
    OutsideWorkingArea { y_in: f64, y1: f64, p_density: f64 },

    #[error("quadrature did not converge: change {delta:e} above {tolerance:e}")]
    NotConverged { delta: f64, tolerance: f64 },

    #[error("surface is not normalized: mass {mass}")]
    NotNormalized { mass: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
