//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by schedule algebra, priors, solvers, samplers and I/O.
#[derive(Debug, Error)]
pub enum DigError {
    /// A numeric argument fell outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structurally invalid argument (bad counts, empty inputs, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The observation is noisier than the schedule horizon: there is no
    /// t in [0, T] with sigma(t) equal to the requested level. Raising
    /// `t_max` is the only fix.
    #[error(
        "observation noisier than schedule horizon: sigma_v = {sigma} exceeds sigma(T) = {sigma_max}"
    )]
    ScheduleHorizon { sigma: f64, sigma_max: f64 },

    /// An Euler-Maruyama step was asked to evaluate the score at zero
    /// noise level.
    #[error("degenerate step: score undefined at sigma(t) = 0 (t = {t})")]
    DegenerateStep { t: f64 },

    /// Training produced a non-finite loss or parameter.
    #[error("training diverged at step {step}: non-finite loss or parameters")]
    TrainingDiverged { step: usize },

    /// A model file could not be decoded (corrupt payload or unknown version).
    #[error("model format error: {0}")]
    ModelFormat(String),

    /// A vector length did not match the expected signal length.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// More posterior samples were requested than the chain retains.
    #[error("insufficient samples: requested {requested}, available {available}")]
    InsufficientSamples { requested: usize, available: usize },

    /// A grid density left too much probability mass at its boundary.
    #[error("grid too narrow: boundary mass {boundary_mass:.3e} exceeds {limit:.3e}; widen the grid")]
    GridTooNarrow { boundary_mass: f64, limit: f64 },

    /// Energy ratios (SIR/SNR) are undefined for zero-energy signals.
    #[error("undefined ratio: zero-energy {0}")]
    ZeroEnergy(&'static str),

    /// Two signals that must share a length do not.
    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Malformed numeric text in a CSV file.
    #[error("csv parse error at {path}:{line}: {message}")]
    CsvParse {
        path: String,
        line: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, DigError>;
