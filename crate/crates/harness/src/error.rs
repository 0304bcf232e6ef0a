use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Pipeline stages, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Dataset,
    Pairing,
    Siamese,
    Sigma,
    Spectral,
    Embedding,
    Kmeans,
    Scoring,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Dataset => "dataset",
            Stage::Pairing => "pairing",
            Stage::Siamese => "siamese",
            Stage::Sigma => "sigma",
            Stage::Spectral => "spectral",
            Stage::Embedding => "embedding",
            Stage::Kmeans => "kmeans",
            Stage::Scoring => "scoring",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: rpspectral::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parameter grid is empty")]
    BadGrid,
    #[error("no results to report")]
    NoResults,
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error at {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("malformed results at {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl HarnessError {
    pub fn stage(stage: Stage, source: impl Into<rpspectral::Error>) -> Self {
        HarnessError::Stage {
            stage,
            source: source.into(),
        }
    }
}

impl From<rpspectral::DatasetError> for HarnessError {
    fn from(e: rpspectral::DatasetError) -> Self {
        HarnessError::stage(Stage::Dataset, e)
    }
}
