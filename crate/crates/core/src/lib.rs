//! Engine for identifying and tracking news narratives across a corpus of
//! dated, site-attributed article passages.
//!
//! The pipeline ingests articles, segments them into ~100-word passages,
//! stores precomputed passage embeddings, and clusters the embeddings with an
//! incremental, delayed-creation variant of DP-Means run as daily partial
//! fits. From the resulting cluster timelines it derives keyword labels,
//! per-site narrative fingerprints and communities, origination/amplification
//! influence statistics, trending narratives, and fact-check coverage
//! metrics.

pub mod clients;
pub mod clusterer;
pub mod corpus;
pub mod curation;
pub mod embedding;
pub mod fingerprints;
pub mod influence;
pub mod stats;
#[cfg(test)]
pub(crate) mod testutil;
pub mod watch;

pub use clusterer::{ClusterId, ClusterState, FitConfig, FitReport, NarrativeStore};
pub use corpus::{ArticleDoc, ArticleId, PassageId, PassagePlain, StudyWindow};
pub use embedding::{EmbeddingVector, PassageRecord, PassageStore};
