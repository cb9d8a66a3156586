use thiserror::Error;

/// Errors raised by the kernels, constants, simulator and estimators.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is missing or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// A particle position became non-finite.
    #[error("integration blow-up in replica {replica} at step {step}")]
    Blowup { replica: usize, step: usize },

    #[error("malformed trajectory data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
