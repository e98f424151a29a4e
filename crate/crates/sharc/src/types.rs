//! Domain types shared by every stage of the pipeline.
//!
//! All types here are immutable after construction and safe to share across
//! threads. Graph-building modules assert the structural invariants in debug
//! builds; [`LevelGraph::check_invariants`] and [`EdgeScores::check_invariants`]
//! expose the same checks to tests.

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;
use thiserror::Error;

/// One fixed-length audio window: onset and duration in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub onset: f64,
    pub duration: f64,
}

/// Per-recording matrix of segment embeddings plus the segment timeline.
///
/// `embeddings` is N x F row-major: one row per segment. `labels` carries
/// per-segment cluster ids and is only required for training.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    pub recording_id: String,
    pub embeddings: Array2<f64>,
    pub segments: Option<Vec<Segment>>,
    pub labels: Option<Vec<usize>>,
}

/// A single violated invariant reported by [`EmbeddingSet::validate`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("embedding matrix is empty (N = 0)")]
    EmptyEmbeddings,
    #[error("embedding dimension is zero (F = 0)")]
    ZeroDimension,
    #[error("row {row} contains a non-finite value at column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("{found} segments for {expected} embedding rows")]
    SegmentCountMismatch { expected: usize, found: usize },
    #[error("segment {index} has negative duration {duration}")]
    NegativeDuration { index: usize, duration: f64 },
    #[error("{found} labels for {expected} embedding rows")]
    LabelCountMismatch { expected: usize, found: usize },
}

impl EmbeddingSet {
    pub fn new(recording_id: impl Into<String>, embeddings: Array2<f64>) -> Self {
        Self {
            recording_id: recording_id.into(),
            embeddings,
            segments: None,
            labels: None,
        }
    }

    pub fn with_segments(mut self, segments: Vec<Segment>) -> Self {
        self.segments = Some(segments);
        self
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Self {
        self.labels = Some(labels);
        self
    }

    /// Number of segments (rows).
    pub fn len(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.nrows() == 0
    }

    /// Embedding dimension F.
    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    /// Checks every structural invariant, collecting all violations instead
    /// of stopping at the first.
    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut violations = Vec::new();
        let n = self.embeddings.nrows();
        if n == 0 {
            violations.push(Violation::EmptyEmbeddings);
        }
        if self.embeddings.ncols() == 0 {
            violations.push(Violation::ZeroDimension);
        }
        'rows: for (row, r) in self.embeddings.outer_iter().enumerate() {
            for (col, v) in r.iter().enumerate() {
                if !v.is_finite() {
                    violations.push(Violation::NonFiniteValue { row, col });
                    continue 'rows;
                }
            }
        }
        if let Some(segments) = &self.segments {
            if segments.len() != n {
                violations.push(Violation::SegmentCountMismatch {
                    expected: n,
                    found: segments.len(),
                });
            }
            for (index, seg) in segments.iter().enumerate() {
                if seg.duration < 0.0 {
                    violations.push(Violation::NegativeDuration {
                        index,
                        duration: seg.duration,
                    });
                }
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                violations.push(Violation::LabelCountMismatch {
                    expected: n,
                    found: labels.len(),
                });
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }
}

/// One level of the merge hierarchy: nodes with concatenated
/// identity/average features and directed kNN edges.
///
/// Node features are n x 2F; the first F columns are the identity feature
/// (the representative embedding of the cluster the node stands for), the
/// last F the average feature. Edges are grouped by source node in
/// ascending order; `out_range` gives each node's contiguous slice.
#[derive(Debug, Clone)]
pub struct LevelGraph {
    pub level: usize,
    /// Requested neighbor count; effective out-degree is `min(k, n-1)`.
    pub k: usize,
    pub node_features: Array2<f64>,
    /// Directed (src, dst) pairs, grouped by src ascending.
    pub edges: Vec<(usize, usize)>,
    /// Similarity of each edge's endpoints, aligned with `edges`.
    pub edge_similarity: Vec<f64>,
    /// For each node, the sorted level-0 embedding indices it represents.
    pub node_origin: Vec<Vec<usize>>,
    offsets: Vec<usize>,
}

impl LevelGraph {
    /// Builds a graph from parts. Edges must arrive grouped by source in
    /// ascending order (as produced by kNN selection).
    pub fn new(
        level: usize,
        k: usize,
        node_features: Array2<f64>,
        edges: Vec<(usize, usize)>,
        edge_similarity: Vec<f64>,
        node_origin: Vec<Vec<usize>>,
    ) -> Self {
        let n = node_features.nrows();
        assert_eq!(edges.len(), edge_similarity.len());
        assert_eq!(node_origin.len(), n);
        let mut offsets = vec![0usize; n + 1];
        for &(src, _) in &edges {
            offsets[src + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        debug_assert!(edges.windows(2).all(|w| w[0].0 <= w[1].0), "edges not grouped by src");
        let graph = Self {
            level,
            k,
            node_features,
            edges,
            edge_similarity,
            node_origin,
            offsets,
        };
        debug_assert_eq!(graph.check_invariants(), Ok(()));
        graph
    }

    /// Number of nodes at this level.
    pub fn n(&self) -> usize {
        self.node_features.nrows()
    }

    /// Width of the node features (2F).
    pub fn feature_dim(&self) -> usize {
        self.node_features.ncols()
    }

    /// Embedding dimension F.
    pub fn embedding_dim(&self) -> usize {
        self.node_features.ncols() / 2
    }

    /// Indices into `edges` of node `i`'s out-edges.
    pub fn out_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Out-degree of node `i`.
    pub fn out_degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// The identity-feature half of the node representations (n x F).
    pub fn identity_features(&self) -> ArrayView2<'_, f64> {
        let f = self.embedding_dim();
        self.node_features.slice(s![.., ..f])
    }

    /// The average-feature half of the node representations (n x F).
    pub fn average_features(&self) -> ArrayView2<'_, f64> {
        let f = self.embedding_dim();
        self.node_features.slice(s![.., f..])
    }

    /// Total number of level-0 embeddings represented across all nodes.
    pub fn total_origins(&self) -> usize {
        self.node_origin.iter().map(Vec::len).sum()
    }

    /// Verifies the structural invariants; returns a description of the
    /// first violation found.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.n();
        if self.node_features.ncols() % 2 != 0 {
            return Err(format!("feature width {} is odd", self.node_features.ncols()));
        }
        if self.edges.len() != self.edge_similarity.len() {
            return Err("edge/similarity length mismatch".into());
        }
        let expected_degree = if n == 0 { 0 } else { self.k.min(n - 1) };
        for i in 0..n {
            if self.out_degree(i) != expected_degree {
                return Err(format!(
                    "node {i} has out-degree {}, expected {expected_degree}",
                    self.out_degree(i)
                ));
            }
        }
        for (idx, &(src, dst)) in self.edges.iter().enumerate() {
            if src == dst {
                return Err(format!("edge {idx} is a self-loop on node {src}"));
            }
            if src >= n || dst >= n {
                return Err(format!("edge {idx} ({src}->{dst}) out of range"));
            }
            let sim = self.edge_similarity[idx];
            if !(0.0..=1.0).contains(&sim) {
                return Err(format!("edge {idx} similarity {sim} outside [0, 1]"));
            }
        }
        // Origins must partition {0..N-1}.
        let mut seen: Vec<usize> = Vec::with_capacity(self.total_origins());
        for (node, origin) in self.node_origin.iter().enumerate() {
            if origin.is_empty() {
                return Err(format!("node {node} has an empty origin set"));
            }
            if origin.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("node {node} origin set not strictly sorted"));
            }
            seen.extend_from_slice(origin);
        }
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err("origin sets overlap".into());
        }
        if let (Some(&first), Some(&last)) = (seen.first(), seen.last()) {
            if first != 0 || last != seen.len() - 1 {
                return Err("origin sets do not cover 0..N-1".into());
            }
        }
        Ok(())
    }
}

/// Layer widths of the scorer: GraphSAGE output F' and the two hidden
/// layers of the pairwise head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ScorerDims {
    pub latent: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

impl Default for ScorerDims {
    fn default() -> Self {
        // Desk-scale defaults; production-size layers are configurable.
        Self {
            latent: 64,
            hidden1: 32,
            hidden2: 32,
        }
    }
}

/// All learnable weights: one GraphSAGE layer and a three-layer
/// feed-forward head ending in two logits.
///
/// The SAGE layer consumes `[h_i ; neigh_i]` of width 4F and emits F'
/// latent features; the head consumes concatenated endpoint latents
/// (width 2F').
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    pub sage_weight: Array2<f64>, // F' x 4F
    pub sage_bias: Array1<f64>,   // F'
    pub ffn_w1: Array2<f64>,      // h1 x 2F'
    pub ffn_b1: Array1<f64>,
    pub ffn_w2: Array2<f64>, // h2 x h1
    pub ffn_b2: Array1<f64>,
    pub ffn_w3: Array2<f64>, // 2 x h2
    pub ffn_b3: Array1<f64>,
}

impl ScorerParams {
    /// All-zero parameters of the given shape.
    pub fn zeros(embedding_dim: usize, dims: ScorerDims) -> Self {
        let ScorerDims {
            latent,
            hidden1,
            hidden2,
        } = dims;
        Self {
            sage_weight: Array2::zeros((latent, 4 * embedding_dim)),
            sage_bias: Array1::zeros(latent),
            ffn_w1: Array2::zeros((hidden1, 2 * latent)),
            ffn_b1: Array1::zeros(hidden1),
            ffn_w2: Array2::zeros((hidden2, hidden1)),
            ffn_b2: Array1::zeros(hidden2),
            ffn_w3: Array2::zeros((2, hidden2)),
            ffn_b3: Array1::zeros(2),
        }
    }

    /// Seed-controlled init: weights uniform in `+-1/sqrt(fan_in)`, biases zero.
    pub fn init<R: Rng>(embedding_dim: usize, dims: ScorerDims, rng: &mut R) -> Self {
        let mut params = Self::zeros(embedding_dim, dims);
        for w in [
            &mut params.sage_weight,
            &mut params.ffn_w1,
            &mut params.ffn_w2,
            &mut params.ffn_w3,
        ] {
            let bound = 1.0 / (w.ncols() as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        }
        params
    }

    /// Embedding dimension F the parameters were shaped for.
    pub fn embedding_dim(&self) -> usize {
        self.sage_weight.ncols() / 4
    }

    pub fn dims(&self) -> ScorerDims {
        ScorerDims {
            latent: self.sage_weight.nrows(),
            hidden1: self.ffn_w1.nrows(),
            hidden2: self.ffn_w2.nrows(),
        }
    }

    /// True if every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Total number of scalar parameters.
    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Reads the flat coordinate `idx` (tensor order: SAGE weight, SAGE
    /// bias, then each head layer's weight and bias).
    pub fn get_flat(&self, idx: usize) -> f64 {
        let (t, off) = self.locate(idx);
        self.tensors()[t][off]
    }

    /// Writes the flat coordinate `idx`.
    pub fn set_flat(&mut self, idx: usize, value: f64) {
        let (t, off) = self.locate(idx);
        self.tensors_mut()[t][off] = value;
    }

    /// In-place `self += coeff * other`, used for SGD steps and gradient
    /// accumulation. Shapes must match.
    pub fn axpy(&mut self, coeff: f64, other: &ScorerParams) {
        self.sage_weight.scaled_add(coeff, &other.sage_weight);
        self.sage_bias.scaled_add(coeff, &other.sage_bias);
        self.ffn_w1.scaled_add(coeff, &other.ffn_w1);
        self.ffn_b1.scaled_add(coeff, &other.ffn_b1);
        self.ffn_w2.scaled_add(coeff, &other.ffn_w2);
        self.ffn_b2.scaled_add(coeff, &other.ffn_b2);
        self.ffn_w3.scaled_add(coeff, &other.ffn_w3);
        self.ffn_b3.scaled_add(coeff, &other.ffn_b3);
    }

    /// In-place `self *= coeff`.
    pub fn scale(&mut self, coeff: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= coeff);
        }
    }

    fn locate(&self, idx: usize) -> (usize, usize) {
        let mut rem = idx;
        for (t, tensor) in self.tensors().iter().enumerate() {
            if rem < tensor.len() {
                return (t, rem);
            }
            rem -= tensor.len();
        }
        panic!("flat index {idx} out of range ({} params)", self.n_params());
    }

    pub(crate) fn tensors(&self) -> [&[f64]; 8] {
        [
            self.sage_weight.as_slice().unwrap(),
            self.sage_bias.as_slice().unwrap(),
            self.ffn_w1.as_slice().unwrap(),
            self.ffn_b1.as_slice().unwrap(),
            self.ffn_w2.as_slice().unwrap(),
            self.ffn_b2.as_slice().unwrap(),
            self.ffn_w3.as_slice().unwrap(),
            self.ffn_b3.as_slice().unwrap(),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.sage_weight.as_slice_mut().unwrap(),
            self.sage_bias.as_slice_mut().unwrap(),
            self.ffn_w1.as_slice_mut().unwrap(),
            self.ffn_b1.as_slice_mut().unwrap(),
            self.ffn_w2.as_slice_mut().unwrap(),
            self.ffn_b2.as_slice_mut().unwrap(),
            self.ffn_w3.as_slice_mut().unwrap(),
            self.ffn_b3.as_slice_mut().unwrap(),
        ]
    }
}

/// Per-edge linkage probabilities, derived edge weights and per-node
/// densities for one level graph.
#[derive(Debug, Clone)]
pub struct EdgeScores {
    /// p_ij in [0, 1], aligned with the graph's edge list.
    pub linkage_prob: Vec<f64>,
    /// 2*p - 1 in [-1, 1], aligned with the edge list.
    pub edge_weight: Vec<f64>,
    /// Similarity-weighted mean of outgoing edge weights, one per node.
    pub density: Vec<f64>,
}

impl EdgeScores {
    /// Verifies the derivation invariants: `edge_weight` is bit-for-bit
    /// `2*p - 1` and densities stay within [-1, 1].
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.linkage_prob.len() != self.edge_weight.len() {
            return Err("probability/weight length mismatch".into());
        }
        for (i, (&p, &w)) in self.linkage_prob.iter().zip(&self.edge_weight).enumerate() {
            if w.to_bits() != (2.0 * p - 1.0).to_bits() {
                return Err(format!("edge {i}: weight {w} != 2*{p} - 1"));
            }
        }
        for (i, &d) in self.density.iter().enumerate() {
            if !(d.abs() <= 1.0 + 1e-12) {
                return Err(format!("node {i}: density {d} outside [-1, 1]"));
            }
        }
        Ok(())
    }
}

/// Why the level loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The level had at most one node left.
    SingleNode,
    /// No merge edges were selected; every component was a singleton.
    NoMerges,
    /// The configured maximum number of levels was reached.
    LevelCap,
}

/// One executed merge round: the graph that was clustered and the dense
/// cluster id assigned to each of its nodes.
#[derive(Debug, Clone)]
pub struct HierarchyLevel {
    pub graph: LevelGraph,
    pub assignment: Vec<usize>,
}

/// The full output of hierarchical inference.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    /// Merge rounds in order; empty when no merges happened.
    pub levels: Vec<HierarchyLevel>,
    /// Final cluster id per level-0 embedding.
    pub final_labels: Vec<usize>,
    pub termination: Termination,
}

impl Hierarchy {
    /// Number of merge rounds performed.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Number of distinct final clusters.
    pub fn num_clusters(&self) -> usize {
        self.final_labels.iter().copied().max().map_or(0, |m| m + 1)
    }

    /// Recomputes the final labels by composing the per-level assignments,
    /// independent of the `node_origin` bookkeeping.
    pub fn compose_labels(&self) -> Vec<usize> {
        let n = self.final_labels.len();
        let mut labels: Vec<usize> = (0..n).collect();
        for level in &self.levels {
            for l in labels.iter_mut() {
                *l = level.assignment[*l];
            }
        }
        labels
    }
}
