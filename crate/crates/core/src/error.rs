use thiserror::Error;

use crate::caption::CaptionError;
use crate::cleaning::CleaningError;
use crate::corpus::CorpusError;
use crate::loss::LossError;
use crate::metrics::MetricError;
use crate::schedule::ScheduleError;
use crate::talker::TalkerError;
use crate::templates::TemplateError;
use crate::thinker::ThinkerError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error; each module keeps its own enum and converts into this.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Caption(#[from] CaptionError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Thinker(#[from] ThinkerError),
    #[error(transparent)]
    Talker(#[from] TalkerError),
    #[error(transparent)]
    Cleaning(#[from] CleaningError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
