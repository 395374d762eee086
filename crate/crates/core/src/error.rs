use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the toolkit.
///
/// Variants are grouped so that callers (notably the CLI) can map them onto
/// "bad input" versus "numerical failure" exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("column `{0}` has no observed values")]
    EmptyColumn(String),
    #[error("continuous column `{0}` has zero variance on the training set")]
    ZeroVariance(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("no events observed; survival model cannot be fitted")]
    NoEvents,
    #[error("only one class present in labels")]
    SingleClass,
    #[error("no comparable pairs")]
    NoComparablePairs,
    #[error("all subjects were excluded by the horizon rule")]
    AllExcluded,
    #[error("non-finite objective or gradient at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("solver did not converge after {iterations} iterations (last objectives: {trace_tail:?})")]
    NotConverged {
        iterations: usize,
        trace_tail: Vec<f64>,
    },
    #[error("mixture fit collapsed to a single group after {restarts} restarts")]
    DegenerateMixture { restarts: usize },
    #[error("censoring calibration failed: reached {achieved:.3} for target {target:.3}")]
    Calibration { target: f64, achieved: f64 },
    #[error("all cross-validation folds were skipped")]
    AllFoldsSkipped,
    #[error("{model}: {source}")]
    Model {
        model: String,
        #[source]
        source: Box<Error>,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps an error with the name of the model that produced it.
    pub fn in_model(self, model: impl Into<String>) -> Self {
        Error::Model {
            model: model.into(),
            source: Box::new(self),
        }
    }

    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFinite { .. }
            | Error::NotConverged { .. }
            | Error::DegenerateMixture { .. }
            | Error::Calibration { .. } => true,
            Error::Model { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
