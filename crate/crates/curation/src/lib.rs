//! Multi-annotator review of generated artifacts.
//!
//! Annotators accept or reject artifacts of a run. Any reject removes the
//! artifact and everything generated from it; an artifact is accepted once
//! enough annotators accept it. The curated export keeps only tests whose
//! whole lineage survived.

mod http;
mod service;
mod status;

use thiserror::Error;

pub use http::{router, serve, ANNOTATOR_HEADER};
pub use service::{
    ArtifactContent, ArtifactDetail, ArtifactPage, ArtifactSummary, CuratedBundle, CurationConfig, CurationService,
    ListQuery,
};
pub use status::{compute_statuses, latest_verdicts, CurationStatus, Decision, Status, Verdict};

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("unknown run {0}")]
    UnknownRun(String),
    #[error("unknown artifact {0}")]
    UnknownArtifact(String),
    #[error("artifact {id} exists in several runs ({}); pass ?run=", runs.join(", "))]
    AmbiguousArtifact { id: String, runs: Vec<String> },
    #[error("{pending} artifacts still need verdicts (e.g. {})", examples.join(", "))]
    IncompleteCuration { pending: usize, examples: Vec<String> },
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Pipeline(#[from] convtest::pipeline::PipelineError),
    #[error("worker failed: {0}")]
    Join(String),
}

impl CurationError {
    pub fn code(&self) -> &'static str {
        match self {
            CurationError::UnknownRun(_) => "UnknownRun",
            CurationError::UnknownArtifact(_) => "UnknownArtifact",
            CurationError::AmbiguousArtifact { .. } => "AmbiguousArtifact",
            CurationError::IncompleteCuration { .. } => "IncompleteCuration",
            CurationError::BadRequest(_) => "BadRequest",
            CurationError::Pipeline(_) => "StoreError",
            CurationError::Join(_) => "Internal",
        }
    }
}
