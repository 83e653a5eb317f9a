use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage names used when attributing a per-frame failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ridge,
    Wall,
    Snake,
    ActivePolynomials,
    Segments,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Ridge => "ridge",
            Stage::Wall => "wall",
            Stage::Snake => "snake",
            Stage::ActivePolynomials => "active_polynomials",
            Stage::Segments => "segments",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot ingest {path}: {reason}")]
    Ingestion { path: PathBuf, reason: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("level set diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("level set has no zero crossing")]
    NoZeroCrossing,

    #[error("contour passes {distance:.2} px from the {landmark} landmark (tolerance {tolerance} px)")]
    Alignment {
        landmark: &'static str,
        distance: f64,
        tolerance: f64,
    },

    #[error("only {found} ridge points detected, {required} required")]
    InsufficientRidge { found: usize, required: usize },

    #[error("frame {frame} failed at {stage} stage: {source}")]
    Frame {
        frame: usize,
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("echo {id} unprocessable: {processed} of {total} frames processed")]
    Unprocessable {
        id: String,
        processed: usize,
        total: usize,
    },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_stage(self, frame: usize, stage: Stage) -> Self {
        Error::Frame {
            frame,
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input rather than by the data.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Ingestion { .. } | Error::Json { .. }
        )
    }
}
