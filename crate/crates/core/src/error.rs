use serde::Serialize;

/// Library-wide error. Every variant maps to a stable numeric code used by
/// the CLI error record and the C ABI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {msg}")]
    InvalidParam { name: &'static str, msg: String },

    #[error("degenerate region: {0}")]
    DegenerateRegion(String),

    #[error("singular evaluation: {0}")]
    Singular(String),

    #[error("{what} did not converge after {iters} iterations (last update {last:.3e})")]
    NoConvergence {
        what: &'static str,
        iters: usize,
        last: f64,
    },

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Machine-readable form written by the CLI on failure.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub code: i32,
    pub message: String,
}

impl Error {
    pub fn invalid(name: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            msg: msg.into(),
        }
    }

    pub fn code(&self) -> i32 {
        match self {
            Error::InvalidParam { .. } => 2,
            Error::DegenerateRegion(_) => 3,
            Error::Singular(_) => 4,
            Error::NoConvergence { .. } => 5,
            Error::Consistency(_) => 6,
            Error::Config(_) => 7,
            Error::Io(_) => 8,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParam { .. } => "invalid_param",
            Error::DegenerateRegion(_) => "degenerate_region",
            Error::Singular(_) => "singular",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Consistency(_) => "consistency",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            error: self.kind(),
            code: self.code(),
            message: self.to_string(),
        }
    }
}
