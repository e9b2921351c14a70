//! Corpus ingestion and time-series sample construction.
//!
//! Raw sequences are grouped into yearly (or monthly) cohorts, ambiguous
//! residues are resolved, each cohort is clustered, clusters are chained to
//! their nearest successor in the next cohort, and labeled per-site samples
//! are drawn along each chain.

mod chain;
mod corpus;
mod io;
mod kmeans;
mod pipeline;
mod sampling;
mod sanitize;
mod split;

pub use chain::{build_chains, link_clusters, ChainLink, ClusterChain, ClusteredStep};
pub use corpus::{parse_corpus, parse_corpus_str, CorpusFormat};
pub use io::{
    parse_manifest, parse_samples, read_manifest, read_samples, write_samples, GroupManifest, SamplesHeader, SplitManifest,
    SAMPLES_FORMAT_VERSION,
};
pub use kmeans::{cluster_cohort, Cluster, KMeansParams, KMeansResult};
pub use pipeline::{build_samples, DatasetParams, SampleGroup};
pub use sampling::{sample_time_series, Provenance, SiteSample};
pub use sanitize::{sanitize_record, sanitize_residue, sanitize_sequence};
pub use split::{split_counts, split_dataset, SplitCounts, SplitSpec, Splits};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingError;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{location}: {detail}")]
    Parse { location: String, detail: String },
    #[error("no records")]
    NoRecords,
    #[error("sequence lengths differ from {expected}: {}", format_offenders(.offenders))]
    LengthMismatch {
        expected: usize,
        offenders: Vec<(String, usize)>,
    },
    #[error("invalid residue symbol {symbol:?}")]
    InvalidSymbol { symbol: char },
    #[error("embedding vectors must have positive dimension")]
    Dimension,
    #[error("missing time step {missing} between {before} and {after}")]
    Gap {
        missing: i64,
        before: i64,
        after: i64,
    },
    #[error("sampling: {0}")]
    Sampling(String),
    #[error("{0}")]
    Contract(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

fn format_offenders(offenders: &[(String, usize)]) -> String {
    let shown: Vec<String> = offenders
        .iter()
        .take(20)
        .map(|(id, len)| format!("{id} ({len})"))
        .collect();
    let more = offenders.len().saturating_sub(20);
    if more > 0 {
        format!("{} and {more} more", shown.join(", "))
    } else {
        shown.join(", ")
    }
}

/// One amino-acid sequence with its time index (a year, or a month counted
/// as `year * 12 + month - 1`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub id: String,
    pub time_index: i64,
    residues: Vec<u8>,
}

impl SequenceRecord {
    pub fn new(id: impl Into<String>, time_index: i64, residues: impl Into<Vec<u8>>) -> Self {
        SequenceRecord {
            id: id.into(),
            time_index,
            residues: residues.into(),
        }
    }

    pub fn residues(&self) -> &[u8] {
        &self.residues
    }

    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }

    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.residues).unwrap_or("")
    }
}

/// All records sharing a time index, in file order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimeCohort {
    pub time_index: i64,
    pub records: Vec<SequenceRecord>,
}
