use thiserror::Error;

use crate::clustering::ClusterError;
use crate::factors::FactorError;
use crate::ingest::IngestError;
use crate::periods::PeriodError;
use crate::synth::SynthError;
use crate::timeline::TimelineError;

/// Pipeline-level error carrying the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("factors: {0}")]
    Factors(#[from] FactorError),
    #[error("clustering: {0}")]
    Clustering(#[from] ClusterError),
    #[error("timeline: {0}")]
    Timeline(#[from] TimelineError),
    #[error("periods: {0}")]
    Periods(#[from] PeriodError),
    #[error("synth: {0}")]
    Synth(#[from] SynthError),
    #[error("artifact i/o on {path}: {source}")]
    Artifact {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True when the failure means the data admits no meaningful clustering
    /// (too few distinct users, coincident centroids) rather than bad input.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::Clustering(e) if e.is_degenerate())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
