use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition (non-positive rate, empty
    /// grid, efficiency outside [0, 1], ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A covariance matrix failed positivity / Heisenberg validation.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// The requested configuration is outside the supported model
    /// (e.g. a detuned drive).
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// A sideband-cooling configuration with non-positive net damping.
    #[error("instability: {0}")]
    Instability(String),

    /// Nonlinear fit failed to converge.
    #[error("fit error: {0}")]
    Fit(String),

    /// Time-domain integration diverged.
    #[error("integration error: {0}")]
    Integration(String),

    /// Config-file parsing or validation failure.
    #[error("config error: {0}")]
    Config(String),

    /// An oracle / verification run did not meet its tolerance.
    #[error("verification failure: {0}")]
    Verification(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Process exit code for the CLI: 1 domain/model errors, 2 usage/config,
    /// 3 verification failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Verification(_) => 3,
            _ => 1,
        }
    }
}
