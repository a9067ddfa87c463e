use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },

    #[error("{op}: invalid argument: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    #[error("{0}")]
    Autograd(String),

    #[error("parameter store: {0}")]
    Params(String),

    #[error("topology: {0}")]
    Topology(String),

    #[error("gradient for parameter `{name}` is not finite")]
    NonFiniteGradient { name: String },

    #[error("training diverged at epoch {epoch}, step {step}: loss is not finite")]
    Diverged { epoch: usize, step: u64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("pnm: unknown magic `{0}`")]
    PnmMagic(String),

    #[error("pnm: malformed {0}")]
    PnmHeader(String),

    #[error("pnm: premature end of file: {0}")]
    PnmEof(String),

    #[error("data: {0}")]
    Data(String),

    #[error("metrics: {0}")]
    Metrics(String),

    #[error("config line {line}: {detail}")]
    Config { line: usize, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-readable category, used by the CLI for its one-line error report.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape { .. } | Error::InvalidArgument { .. } | Error::NonFinite { .. } => "tensor",
            Error::Autograd(_) => "autograd",
            Error::Params(_) => "params",
            Error::Topology(_) => "topology",
            Error::NonFiniteGradient { .. } | Error::Diverged { .. } => "training",
            Error::Checkpoint(_) => "checkpoint",
            Error::PnmMagic(_) | Error::PnmHeader(_) | Error::PnmEof(_) => "image",
            Error::Data(_) => "data",
            Error::Metrics(_) => "metrics",
            Error::Config { .. } => "config",
            Error::Io { .. } => "io",
        }
    }
}
