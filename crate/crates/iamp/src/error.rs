use std::path::PathBuf;

use iamp_core::accel::AccelError;
use iamp_core::corridor::CorridorError;
use iamp_core::fusion::FusionError;
use iamp_core::intention::IntentionError;
use iamp_core::map::MapError;
use iamp_core::markov::MarkovError;
use iamp_core::predict::PredictError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: {reason}")]
    Schema { path: PathBuf, reason: String },
    #[error("recording {recording}, track {track}: frame {frame} does not follow frame {previous}")]
    NonMonotoneFrames {
        recording: i64,
        track: i64,
        previous: i64,
        frame: i64,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: payload checksum mismatch")]
    Checksum { path: PathBuf },
    #[error("unknown scenario `{0}` (expected straight, fork, four_arm, t_junction, roundabout or queue)")]
    UnknownScenario(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("at t = {t:.1} s: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error(transparent)]
    Accel(#[from] AccelError),
    #[error(transparent)]
    Intention(#[from] IntentionError),
    #[error(transparent)]
    Corridor(#[from] CorridorError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Predict(#[from] PredictError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn at(self, t: f64) -> Self {
        Error::AtTime {
            t,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
