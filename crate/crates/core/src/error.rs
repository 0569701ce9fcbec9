//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid nonlinearity: {0}")]
    InvalidNonlinearity(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("kernel evaluated at coincident points")]
    SingularKernelPoint,

    #[error("degenerate ball: radius {radius} selects no cell (spacing {spacing})")]
    DegenerateBall { radius: f64, spacing: f64 },

    #[error("operands live on different grids")]
    GridMismatch,

    #[error("operation requires a periodic grid")]
    PeriodicRequired,

    #[error("operator assembly rejected: {0}")]
    AssemblyRejected(String),

    #[error("Newton iteration failed to converge: residual {residual:.3e} after {iterations} iterations (dt = {dt:.3e})")]
    NewtonFailure {
        residual: f64,
        iterations: usize,
        dt: f64,
    },

    #[error("time step underflow: dt {dt:.3e} fell below dt_min {dt_min:.3e} at t = {t:.6e}")]
    DtFloor { dt: f64, dt_min: f64, t: f64 },

    #[error("solver produced negative values beyond tolerance: min = {min:.3e}")]
    NegativityViolation { min: f64 },

    #[error("self-similar profiles do not exist for m = {m} ≤ critical exponent {m_critical}")]
    NoSelfSimilarProfile { m: f64, m_critical: f64 },

    #[error("self-similar profile iteration did not converge: last L1 increment {increment:.3e} after {cycles} cycles")]
    ProfileNotConverged { increment: f64, cycles: usize },

    #[error("invalid solver configuration: {0}")]
    InvalidSolverConfig(String),

    #[error("invalid check parameters: {0}")]
    InvalidCheck(String),

    #[error("configuration errors:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed data file: {0}")]
    MalformedData(String),
}
