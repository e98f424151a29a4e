//! Supervised hierarchical graph clustering of speaker-segment embeddings.
//!
//! Segment embeddings of a recording become nodes of a kNN graph. A trainable
//! scorer (one GraphSAGE layer plus a pairwise feed-forward head) predicts,
//! for every directed edge, the probability that its endpoints belong to the
//! same speaker, together with a per-node density that marks cluster-central
//! nodes. Inference merges nodes level by level — each node links to its best
//! denser neighbor above a probability threshold, connected components become
//! the clusters of the next level — until no merges remain. The scorer is
//! trained end to end against ground-truth hierarchies with a binary
//! cross-entropy linkage loss plus a density MSE.
//!
//! The crate is organized along the pipeline:
//!
//! - [`types`] — embedding sets, level graphs, scorer parameters, hierarchies
//! - [`simgraph`] — cosine similarity, kNN edge selection, level-graph
//!   construction and cross-level feature aggregation
//! - [`gnn`] — the scorer forward pass: latent features, linkage
//!   probabilities, edge weights, node densities; checkpoint I/O
//! - [`cluster`] — hierarchical inference: candidate edges, merge selection,
//!   connected components, the level loop
//! - [`train`] — ground-truth hierarchies, the combined loss, reverse-mode
//!   gradients, SGD, finite-difference gradient checking
//! - [`data`] — embedding/similarity containers, RTTM files, synthetic
//!   dataset generation
//! - [`eval`] — diarization error rate and pairwise clustering F1
//! - [`cli`] — the `sharc` command-line tool
//!
//! Start with the runnable programs under `examples/`; each demonstrates one
//! capability end to end.

pub mod cli;
pub mod cluster;
pub mod data;
pub mod error;
pub mod eval;
pub mod gnn;
pub mod simgraph;
pub mod train;
pub mod types;

pub use error::Error;
pub use types::{EdgeScores, EmbeddingSet, Hierarchy, LevelGraph, ScorerDims, ScorerParams, Segment};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
