use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("invalid argument to {op}: {detail}")]
    Argument { op: &'static str, detail: String },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward: {0}")]
    Backward(String),
    #[error("value out of range in {op}: {detail}")]
    Range { op: &'static str, detail: String },
    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },
    #[error(transparent)]
    Archive(#[from] crate::nn::archive::ArchiveError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Dimension { op, detail: detail.into() }
}

pub(crate) fn arg(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Argument { op, detail: detail.into() }
}
