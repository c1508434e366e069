use std::path::PathBuf;

use crate::cluster::Side;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("t = {t} is outside the schedule domain [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },

    #[error("value {value} is outside the admissible range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("row {row}, column {col}: cannot parse {value:?} as a number")]
    Parse { row: usize, col: usize, value: String },

    #[error("degenerate kernel: sigma must be positive")]
    DegenerateKernel,

    #[error("no feasible cut for the {side} constraint (best achieved mean {best_mean:.6}, alpha {alpha})")]
    Infeasible { side: Side, best_mean: f64, alpha: f64 },

    #[error("degenerate partition: t1 = {t1} is not below t2 = {t2}")]
    DegeneratePartition { t1: f64, t2: f64 },

    #[error("non-finite state at integration step {step}")]
    NumericalBlowup { step: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
