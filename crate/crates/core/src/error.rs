use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The network head produced a (numerically) zero vector, so no
    /// quaternion can be formed.
    #[error("degenerate network output at step {step}: |W h| = {norm:e}")]
    DegenerateOutput { step: usize, norm: f64 },

    #[error("every sample in the window is masked")]
    AllMasked,

    #[error("{}: row {row}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        row: usize,
        msg: String,
    },

    #[error("weight file: {0}")]
    WeightFormat(String),

    #[error("training diverged: non-finite loss in epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("estimator {estimator} failed: {msg}")]
    Estimator { estimator: String, msg: String },

    #[error("{}: {source}", path.display())]
    Open {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn open_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Open {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
