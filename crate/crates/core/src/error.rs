use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("path blew up at t = {time} (|x| = {norm:e}); reduce the step or use a stabilized scheme")]
    BlowUp { time: f64, norm: f64 },
    #[error("degenerate diffusion: {0}")]
    Degenerate(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("no convergence: {0}")]
    Convergence(String),
    #[error("divergent integral: {0}")]
    Divergent(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("parse error at column {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
