use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    /// A training parameter or privacy parameter is outside its legal range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A mathematical function was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Advanced composition pushed the composed delta to 1 or above.
    #[error("composed delta {delta_prime} is not below 1 (k = {k}, delta = {delta})")]
    ComposedDeltaOverflow { delta: f64, k: u64, delta_prime: f64 },

    /// `exp((alpha - 1) * eps)` overflowed in the subsampling bound.
    #[error("overflow in subsampled RDP bound at alpha = {alpha} (exponent {exponent}); lower alpha")]
    RdpOverflow { alpha: u32, exponent: f64 },

    /// The requested epsilon exceeds the largest epsilon the noise bound supports.
    #[error(
        "epsilon {epsilon} exceeds max_supported_epsilon {max_supported} \
         (binding branch: {branch})"
    )]
    BudgetExceeded {
        epsilon: f64,
        max_supported: f64,
        branch: crate::calibration::BoundBranch,
    },

    /// Malformed container header.
    #[error("malformed header at byte {offset}: {reason}")]
    Parse { offset: u64, reason: String },

    /// Container data shorter or longer than its header declares.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    /// Tabular input missing a required column or holding a bad value.
    #[error("schema error: {0}")]
    Schema(String),

    /// An input collection was empty where at least one element is required.
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
