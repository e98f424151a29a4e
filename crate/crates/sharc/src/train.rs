//! Supervised training of the scorer: ground-truth hierarchies, the
//! combined linkage/density loss, exact reverse-mode gradients, a plain SGD
//! loop and a finite-difference gradient checker.
//!
//! Training hierarchies are built with ground-truth (oracle) clustering, so
//! every level's targets are fixed before the first epoch and graphs can be
//! constructed once and reused. A merged node inherits the label of its
//! origin set, which oracle clustering keeps label-pure.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cluster;
use crate::gnn::{self, ForwardTrace};
use crate::types::{EdgeScores, EmbeddingSet, LevelGraph, ScorerDims, ScorerParams};
use crate::{simgraph, Error, Result};

/// Probabilities are clamped to `[EPS, 1 - EPS]` inside the cross-entropy.
const EPS: f64 = 1e-12;

/// One level graph annotated with ground truth: per-edge same-cluster flags
/// and the per-node density they induce.
#[derive(Debug, Clone)]
pub struct TrainGraph {
    pub graph: LevelGraph,
    /// True iff the edge's endpoints share a cluster label at this level.
    pub link_truth: Vec<bool>,
    /// Ground-truth density: mean over out-edges of `(2q - 1) * similarity`.
    pub density_truth: Vec<f64>,
}

impl TrainGraph {
    fn from_graph(graph: LevelGraph, labels: &[usize]) -> Self {
        let node_labels: Vec<usize> = graph
            .node_origin
            .iter()
            .map(|origin| labels[origin[0]])
            .collect();
        let link_truth: Vec<bool> = graph
            .edges
            .iter()
            .map(|&(i, j)| node_labels[i] == node_labels[j])
            .collect();
        let truth_weights: Vec<f64> = link_truth
            .iter()
            .map(|&q| if q { 1.0 } else { -1.0 })
            .collect();
        let density_truth = gnn::node_density(&truth_weights, &graph);
        Self {
            graph,
            link_truth,
            density_truth,
        }
    }

    /// Ground truth expressed as edge scores, for reuse of the clustering
    /// primitives during hierarchy construction.
    fn oracle_scores(&self) -> EdgeScores {
        let linkage_prob: Vec<f64> = self
            .link_truth
            .iter()
            .map(|&q| if q { 1.0 } else { 0.0 })
            .collect();
        let edge_weight = gnn::edge_weights(&linkage_prob);
        EdgeScores {
            linkage_prob,
            edge_weight,
            density: self.density_truth.clone(),
        }
    }

    /// Verifies the ground-truth invariants against the origin labels.
    pub fn check_invariants(&self, labels: &[usize]) -> std::result::Result<(), String> {
        for (node, origin) in self.graph.node_origin.iter().enumerate() {
            let label = labels[origin[0]];
            if origin.iter().any(|&o| labels[o] != label) {
                return Err(format!("node {node} origin set is not label-pure"));
            }
        }
        for (e, &(i, j)) in self.graph.edges.iter().enumerate() {
            let li = labels[self.graph.node_origin[i][0]];
            let lj = labels[self.graph.node_origin[j][0]];
            if self.link_truth[e] != (li == lj) {
                return Err(format!("edge {e} truth flag disagrees with labels"));
            }
        }
        for i in 0..self.graph.n() {
            let range = self.graph.out_range(i);
            let expect = if range.is_empty() {
                0.0
            } else {
                let deg = range.len() as f64;
                range
                    .map(|e| {
                        let w = if self.link_truth[e] { 1.0 } else { -1.0 };
                        w * self.graph.edge_similarity[e]
                    })
                    .sum::<f64>()
                    / deg
            };
            if (self.density_truth[i] - expect).abs() > 1e-12 {
                return Err(format!("node {i} ground-truth density mismatch"));
            }
        }
        Ok(())
    }
}

/// SGD hyperparameters. `batch_size` counts recordings per update.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub k: usize,
    pub seed: u64,
    pub dims: ScorerDims,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 500,
            batch_size: 8,
            k: 60,
            seed: 42,
            dims: ScorerDims::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Loss values for one graph, one batch or one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub conn: f64,
    pub den: f64,
}

/// Per-epoch mean losses, in the order they were recorded.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub conn: f64,
    pub den: f64,
}

/// Builds ground-truth level graphs for a labeled recording: level 0 from
/// the raw embeddings, each further level from oracle clustering (linkage
/// probability := the same-label flag, densities := their induced values).
/// Every constructed level is returned, including the final one on which no
/// merges occur.
pub fn build_training_hierarchy(set: &EmbeddingSet, k: usize) -> Result<Vec<TrainGraph>> {
    let Some(labels) = &set.labels else {
        return Err(Error::MissingLabels {
            recording_id: set.recording_id.clone(),
        });
    };
    let mut graph = simgraph::build_level0(set, k)?;
    let mut levels = Vec::new();
    loop {
        let tg = TrainGraph::from_graph(graph, labels);
        let scores = tg.oracle_scores();
        let candidates = cluster::candidate_set(&tg.graph, &scores, 0.5);
        let merges = cluster::select_merges(&tg.graph, &candidates, &scores);
        if merges.is_empty() || tg.graph.n() <= 1 {
            levels.push(tg);
            break;
        }
        let assignment = cluster::components(&merges, tg.graph.n());
        graph = simgraph::aggregate(&tg.graph, &assignment, &scores.density)?;
        levels.push(tg);
    }
    Ok(levels)
}

/// Eq.-style combined loss: mean binary cross entropy of the linkage
/// probabilities over all kNN edges plus mean squared error between
/// ground-truth and predicted node densities.
pub fn loss(scores: &EdgeScores, tg: &TrainGraph) -> LossBreakdown {
    let m = tg.graph.edges.len();
    let conn = if m == 0 {
        0.0
    } else {
        let mut acc = 0.0;
        for (&p, &q) in scores.linkage_prob.iter().zip(&tg.link_truth) {
            let p = p.clamp(EPS, 1.0 - EPS);
            acc -= if q { p.ln() } else { (1.0 - p).ln() };
        }
        acc / m as f64
    };
    let n = tg.graph.n();
    let den = if n == 0 {
        0.0
    } else {
        tg.density_truth
            .iter()
            .zip(&scores.density)
            .map(|(&d, &dh)| (d - dh) * (d - dh))
            .sum::<f64>()
            / n as f64
    };
    LossBreakdown {
        total: conn + den,
        conn,
        den,
    }
}

/// Forward pass plus loss for one training graph.
pub fn evaluate(params: &ScorerParams, tg: &TrainGraph) -> Result<LossBreakdown> {
    let (_, scores) = gnn::score(&tg.graph, params)?;
    Ok(loss(&scores, tg))
}

/// Exact analytic gradients of the combined loss with respect to every
/// parameter, computed by reverse-mode differentiation through the density,
/// the two-class softmax, the head and the SAGE layer. Returns the loss
/// alongside the gradients.
pub fn backward(
    trace: &ForwardTrace,
    tg: &TrainGraph,
    params: &ScorerParams,
) -> Result<(LossBreakdown, ScorerParams)> {
    let graph = &tg.graph;
    let n = graph.n();
    let m = graph.edges.len();
    let latent_dim = params.dims().latent;
    let mut grads = ScorerParams::zeros(params.embedding_dim(), params.dims());

    // Forward over edges, keeping per-chunk activations for the backward
    // sweep. Chunk boundaries are fixed by edge count, so accumulation
    // order does not depend on the worker count.
    const CHUNK: usize = 8192;
    let edge_chunks: Vec<&[(usize, usize)]> = graph.edges.chunks(CHUNK).collect();
    struct ChunkState {
        z: Array2<f64>,
        ffn: gnn::FfnChunk,
        probs: Vec<f64>,
    }
    let states: Vec<ChunkState> = edge_chunks
        .par_iter()
        .map(|&edges| {
            let z = gnn::gather_pairs(&trace.latent, edges);
            let ffn = gnn::ffn_chunk(params, &z);
            let probs = ffn
                .logits
                .outer_iter()
                .map(|l| 1.0 / (1.0 + (-(l[1] - l[0])).exp()))
                .collect();
            ChunkState { z, ffn, probs }
        })
        .collect();

    let mut probs = Vec::with_capacity(m);
    for state in &states {
        probs.extend_from_slice(&state.probs);
    }
    let edge_weight = gnn::edge_weights(&probs);
    let density = gnn::node_density(&edge_weight, graph);
    let scores = EdgeScores {
        linkage_prob: probs,
        edge_weight,
        density,
    };
    let breakdown = loss(&scores, tg);

    // dL/dp per edge: cross-entropy term (zero where the clamp is active)
    // plus the density term 2 * dL/d(density_i) * S(i,j) / deg_i.
    let mut grad_p = vec![0.0f64; m];
    for (e, &(i, _)) in graph.edges.iter().enumerate() {
        let p = scores.linkage_prob[e];
        let mut g = 0.0;
        if p > EPS && p < 1.0 - EPS {
            let q = if tg.link_truth[e] { 1.0 } else { 0.0 };
            g -= (q / p - (1.0 - q) / (1.0 - p)) / m as f64;
        }
        let deg = graph.out_degree(i) as f64;
        let dden = 2.0 / n as f64 * (scores.density[i] - tg.density_truth[i]);
        g += dden * graph.edge_similarity[e] / deg * 2.0;
        grad_p[e] = g;
    }

    // Backward through the head, chunk by chunk; per-parameter partials are
    // summed sequentially in chunk order.
    let mut grad_latent = Array2::<f64>::zeros((n, latent_dim));
    let chunk_grads: Vec<(ScorerParams, Array2<f64>)> = states
        .par_iter()
        .enumerate()
        .map(|(c, state)| {
            let edges = edge_chunks[c];
            let rows = edges.len();
            let mut g = ScorerParams::zeros(params.embedding_dim(), params.dims());
            let mut grad_logits = Array2::<f64>::zeros((rows, 2));
            for (row, &gp) in state.probs.iter().enumerate() {
                let base = c * CHUNK + row;
                let slope = gp * (1.0 - gp) * grad_p[base];
                grad_logits[[row, 0]] = -slope;
                grad_logits[[row, 1]] = slope;
            }
            g.ffn_w3 = grad_logits.t().dot(&state.ffn.r2);
            g.ffn_b3 = grad_logits.sum_axis(ndarray::Axis(0));
            let mut grad_t2 = grad_logits.dot(&params.ffn_w3);
            grad_t2.zip_mut_with(&state.ffn.t2, |gv, &t| {
                if t <= 0.0 {
                    *gv = 0.0;
                }
            });
            g.ffn_w2 = grad_t2.t().dot(&state.ffn.r1);
            g.ffn_b2 = grad_t2.sum_axis(ndarray::Axis(0));
            let mut grad_t1 = grad_t2.dot(&params.ffn_w2);
            grad_t1.zip_mut_with(&state.ffn.t1, |gv, &t| {
                if t <= 0.0 {
                    *gv = 0.0;
                }
            });
            g.ffn_w1 = grad_t1.t().dot(&state.z);
            g.ffn_b1 = grad_t1.sum_axis(ndarray::Axis(0));
            let grad_z = grad_t1.dot(&params.ffn_w1);
            (g, grad_z)
        })
        .collect();
    for (c, (g, grad_z)) in chunk_grads.iter().enumerate() {
        grads.axpy(1.0, g);
        for (row, &(src, dst)) in edge_chunks[c].iter().enumerate() {
            for col in 0..latent_dim {
                grad_latent[[src, col]] += grad_z[[row, col]];
                grad_latent[[dst, col]] += grad_z[[row, latent_dim + col]];
            }
        }
    }

    // Backward through the SAGE layer. Neighbor weights are constants, so
    // the chain stops at the layer's own parameters.
    grad_latent.zip_mut_with(&trace.preactivation, |gv, &a| {
        if a <= 0.0 {
            *gv = 0.0;
        }
    });
    grads.sage_weight = grad_latent.t().dot(&trace.sage_input);
    grads.sage_bias = grad_latent.sum_axis(ndarray::Axis(0));

    Ok((breakdown, grads))
}

fn check_finite(epoch: usize, stats: LossBreakdown) -> Result<()> {
    if stats.total.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged {
            epoch,
            loss: stats.total,
        })
    }
}

/// Plain SGD over batches of recordings: per batch, gradients are the mean
/// over every level of every recording in the batch. Returns the trained
/// parameters and the per-epoch loss history. Fully deterministic given the
/// seed, independent of the worker count.
pub fn train(
    datasets: &[EmbeddingSet],
    cfg: &TrainConfig,
) -> Result<(ScorerParams, Vec<EpochStats>)> {
    cfg.validate()?;
    if datasets.is_empty() {
        return Err(Error::InvalidConfig("no training recordings given".into()));
    }
    let f = datasets[0].dim();
    for set in datasets {
        if set.labels.is_none() {
            return Err(Error::MissingLabels {
                recording_id: set.recording_id.clone(),
            });
        }
        if set.dim() != f {
            return Err(Error::ShapeMismatch {
                context: "training embedding dims",
                expected: format!("F = {f}"),
                actual: format!("F = {} in {}", set.dim(), set.recording_id),
            });
        }
    }

    // Targets are model-independent: build every hierarchy once.
    let hierarchies: Vec<Vec<TrainGraph>> = datasets
        .par_iter()
        .map(|set| build_training_hierarchy(set, cfg.k))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ScorerParams::init(f, cfg.dims, &mut rng);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..datasets.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = LossBreakdown {
            total: 0.0,
            conn: 0.0,
            den: 0.0,
        };
        let mut epoch_graphs = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let graphs: Vec<&TrainGraph> = batch
                .iter()
                .flat_map(|&r| hierarchies[r].iter())
                .collect();
            let results: Vec<(LossBreakdown, ScorerParams)> = graphs
                .par_iter()
                .map(|tg| {
                    let trace = gnn::sage_forward(&tg.graph, &params)?;
                    backward(&trace, tg, &params)
                })
                .collect::<Result<_>>()?;

            let mut batch_grad = ScorerParams::zeros(f, cfg.dims);
            for (stats, g) in &results {
                epoch_sum.total += stats.total;
                epoch_sum.conn += stats.conn;
                epoch_sum.den += stats.den;
                batch_grad.axpy(1.0, g);
            }
            epoch_graphs += results.len();
            batch_grad.scale(1.0 / results.len() as f64);
            params.axpy(-cfg.learning_rate, &batch_grad);
        }
        let scale = 1.0 / epoch_graphs as f64;
        let stats = EpochStats {
            epoch,
            loss: epoch_sum.total * scale,
            conn: epoch_sum.conn * scale,
            den: epoch_sum.den * scale,
        };
        check_finite(epoch, LossBreakdown {
            total: stats.loss,
            conn: stats.conn,
            den: stats.den,
        })?;
        history.push(stats);
    }
    Ok((params, history))
}

/// Compares analytic gradients against central finite differences on
/// `n_coords` randomly sampled parameter coordinates and returns the
/// maximum relative error, `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check<R: Rng>(
    params: &ScorerParams,
    tg: &TrainGraph,
    n_coords: usize,
    step: f64,
    rng: &mut R,
) -> Result<f64> {
    if n_coords == 0 {
        return Err(Error::InvalidConfig(
            "grad_check needs at least one coordinate".into(),
        ));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let trace = gnn::sage_forward(&tg.graph, params)?;
    let (_, grads) = backward(&trace, tg, params)?;
    let total = params.n_params();
    let mut max_rel = 0.0f64;
    for _ in 0..n_coords {
        let idx = rng.gen_range(0..total);
        let original = params.get_flat(idx);
        let mut perturbed = params.clone();
        perturbed.set_flat(idx, original + step);
        let plus = evaluate(&perturbed, tg)?.total;
        perturbed.set_flat(idx, original - step);
        let minus = evaluate(&perturbed, tg)?.total;
        let numeric = (plus - minus) / (2.0 * step);
        let analytic = grads.get_flat(idx);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}
