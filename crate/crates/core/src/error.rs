use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid Zadoff-Chu root {root} for length {n} (need 1 <= root < n and gcd(root, n) = 1)")]
    InvalidRoot { n: usize, root: usize },

    #[error("cyclic prefix length {cp_len} must be smaller than block length {n}")]
    InvalidCp { cp_len: usize, n: usize },

    #[error("input too short: need at least {needed} samples, got {got}")]
    InvalidLength { needed: usize, got: usize },

    #[error("RIS phase {index} has magnitude {magnitude}, expected 1")]
    InvalidPhase { index: usize, magnitude: f64 },

    #[error("reference signal has zero energy")]
    ZeroReferenceEnergy,

    #[error("EVM target {target}% unreachable: drive bracket achieves [{min:.4}%, {max:.4}%]")]
    CalibrationFailure { target: f64, min: f64, max: f64 },

    #[error("pilot bin {bin} has magnitude {magnitude:e}, too small for LS division")]
    IllConditionedPilot { bin: usize, magnitude: f64 },

    #[error("link separation failed: {0}")]
    SeparationFailure(String),

    #[error("cannot normalize a zero-norm sample")]
    DegenerateSample,

    #[error("hidden unit {unit} has zero standard deviation")]
    DegenerateStatistics { unit: usize },

    #[error("network not ready: {0}")]
    NotReady(String),

    #[error("NMSE undefined for zero-energy truth")]
    UndefinedMetric,

    #[error("singular value decomposition did not converge")]
    SvdNoConvergence,

    #[error("malformed file: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("trial {trial} at {snr_db} dB: {source}")]
    Trial {
        trial: u64,
        snr_db: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
