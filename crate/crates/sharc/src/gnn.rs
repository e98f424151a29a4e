//! Forward pass of the scoring function: one GraphSAGE layer over the level
//! graph, a pairwise feed-forward head producing linkage probabilities, the
//! derived edge weights and per-node densities.
//!
//! The SAGE aggregator is a similarity-weighted mean of neighbor features
//! followed by ReLU. Directed edges are scored independently, so `p_ij` and
//! `p_ji` may differ. Edge scoring is chunked, so memory stays bounded on
//! large graphs and results are identical for any worker count.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{s, Array1, Array2};
use rayon::prelude::*;

use crate::types::{EdgeScores, LevelGraph, ScorerDims, ScorerParams};
use crate::{Error, Result};

/// Edges scored per GEMM batch.
const EDGE_CHUNK: usize = 8192;

/// Node-level intermediates of the SAGE layer, sufficient to backpropagate
/// the loss (per-edge head activations are recomputed chunk-wise).
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `[h_i ; neigh_i]` rows, n x 4F.
    pub sage_input: Array2<f64>,
    /// Aggregated neighborhood per node, n x 2F.
    pub neighborhood: Array2<f64>,
    /// Pre-ReLU SAGE activations, n x F'.
    pub preactivation: Array2<f64>,
    /// Latent node representations, n x F'.
    pub latent: Array2<f64>,
}

impl ForwardTrace {
    pub fn is_finite(&self) -> bool {
        self.latent.iter().all(|v| v.is_finite())
            && self.neighborhood.iter().all(|v| v.is_finite())
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Runs the GraphSAGE layer: each node's neighborhood embedding is the
/// similarity-weighted mean of its out-neighbors' features (uniform mean if
/// the weights sum to zero, zero vector for an isolated node), and the
/// latent representation is `ReLU(W [h ; neigh] + b)`.
pub fn sage_forward(graph: &LevelGraph, params: &ScorerParams) -> Result<ForwardTrace> {
    let n = graph.n();
    let d = graph.feature_dim();
    if d != 2 * params.embedding_dim() {
        return Err(Error::ShapeMismatch {
            context: "sage_forward node features",
            expected: format!("width {}", 2 * params.embedding_dim()),
            actual: format!("width {d}"),
        });
    }

    let rows: Vec<Array1<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let range = graph.out_range(i);
            let mut acc = Array1::<f64>::zeros(d);
            if range.is_empty() {
                return acc;
            }
            let wsum: f64 = graph.edge_similarity[range.clone()].iter().sum();
            if wsum > 0.0 {
                for e in range {
                    let (_, dst) = graph.edges[e];
                    acc.scaled_add(
                        graph.edge_similarity[e] / wsum,
                        &graph.node_features.row(dst),
                    );
                }
            } else {
                let w = 1.0 / range.len() as f64;
                for e in range {
                    let (_, dst) = graph.edges[e];
                    acc.scaled_add(w, &graph.node_features.row(dst));
                }
            }
            acc
        })
        .collect();

    let mut sage_input = Array2::<f64>::zeros((n, 2 * d));
    let mut neighborhood = Array2::<f64>::zeros((n, d));
    for (i, row) in rows.into_iter().enumerate() {
        sage_input
            .slice_mut(s![i, ..d])
            .assign(&graph.node_features.row(i));
        sage_input.slice_mut(s![i, d..]).assign(&row);
        neighborhood.row_mut(i).assign(&row);
    }

    let mut preactivation = sage_input.dot(&params.sage_weight.t());
    preactivation += &params.sage_bias;
    let latent = preactivation.mapv(relu);
    Ok(ForwardTrace {
        sage_input,
        neighborhood,
        preactivation,
        latent,
    })
}

/// Per-chunk head activations, shared with the backward pass.
pub(crate) struct FfnChunk {
    pub t1: Array2<f64>,
    pub r1: Array2<f64>,
    pub t2: Array2<f64>,
    pub r2: Array2<f64>,
    pub logits: Array2<f64>,
}

pub(crate) fn gather_pairs(latent: &Array2<f64>, edges: &[(usize, usize)]) -> Array2<f64> {
    let fp = latent.ncols();
    let mut z = Array2::<f64>::zeros((edges.len(), 2 * fp));
    for (row, &(src, dst)) in edges.iter().enumerate() {
        z.slice_mut(s![row, ..fp]).assign(&latent.row(src));
        z.slice_mut(s![row, fp..]).assign(&latent.row(dst));
    }
    z
}

pub(crate) fn ffn_chunk(params: &ScorerParams, z: &Array2<f64>) -> FfnChunk {
    let mut t1 = z.dot(&params.ffn_w1.t());
    t1 += &params.ffn_b1;
    let r1 = t1.mapv(relu);
    let mut t2 = r1.dot(&params.ffn_w2.t());
    t2 += &params.ffn_b2;
    let r2 = t2.mapv(relu);
    let mut logits = r2.dot(&params.ffn_w3.t());
    logits += &params.ffn_b3;
    FfnChunk {
        t1,
        r1,
        t2,
        r2,
        logits,
    }
}

/// Scores every directed edge: endpoint latents are concatenated, passed
/// through the three-layer head, and the two logits are normalized into the
/// probability of the "linked" class.
pub fn score_pairs(
    trace: &ForwardTrace,
    graph: &LevelGraph,
    params: &ScorerParams,
) -> Result<Vec<f64>> {
    let fp = params.dims().latent;
    if trace.latent.nrows() != graph.n() || trace.latent.ncols() != fp {
        return Err(Error::ShapeMismatch {
            context: "score_pairs latent",
            expected: format!("{} x {fp}", graph.n()),
            actual: format!("{} x {}", trace.latent.nrows(), trace.latent.ncols()),
        });
    }
    let mut probs = vec![0.0f64; graph.edges.len()];
    probs
        .par_chunks_mut(EDGE_CHUNK)
        .zip(graph.edges.par_chunks(EDGE_CHUNK))
        .for_each(|(out, edges)| {
            let z = gather_pairs(&trace.latent, edges);
            let ffn = ffn_chunk(params, &z);
            for (o, logit) in out.iter_mut().zip(ffn.logits.outer_iter()) {
                // Two-class softmax, probability of the second ("linked") class.
                *o = sigmoid(logit[1] - logit[0]);
            }
        });
    Ok(probs)
}

/// Affine remap of linkage probabilities into [-1, 1].
pub fn edge_weights(linkage_prob: &[f64]) -> Vec<f64> {
    linkage_prob.iter().map(|p| 2.0 * p - 1.0).collect()
}

/// Per-node density: mean over the node's out-edges of `edge_weight *
/// similarity`. The divisor is the actual out-degree; an isolated node has
/// density 0.
pub fn node_density(edge_weight: &[f64], graph: &LevelGraph) -> Vec<f64> {
    (0..graph.n())
        .map(|i| {
            let range = graph.out_range(i);
            if range.is_empty() {
                return 0.0;
            }
            let degree = range.len() as f64;
            range
                .map(|e| edge_weight[e] * graph.edge_similarity[e])
                .sum::<f64>()
                / degree
        })
        .collect()
}

/// Full scoring pass: SAGE forward, pairwise probabilities, edge weights
/// and node densities.
pub fn score(graph: &LevelGraph, params: &ScorerParams) -> Result<(ForwardTrace, EdgeScores)> {
    let trace = sage_forward(graph, params)?;
    let linkage_prob = score_pairs(&trace, graph, params)?;
    let edge_weight = edge_weights(&linkage_prob);
    let density = node_density(&edge_weight, graph);
    Ok((
        trace,
        EdgeScores {
            linkage_prob,
            edge_weight,
            density,
        },
    ))
}

const CHECKPOINT_MAGIC: [u8; 4] = *b"SHCP";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes a parameter checkpoint: magic, format version, the dimensions
/// (F, F', h1, h2) and every tensor row-major as little-endian f64.
pub fn save_checkpoint(params: &ScorerParams, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let dims = params.dims();
    w.write_all(&CHECKPOINT_MAGIC).map_err(|e| Error::io(path, e))?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    for dim in [
        params.embedding_dim(),
        dims.latent,
        dims.hidden1,
        dims.hidden2,
    ] {
        w.write_all(&(dim as u64).to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    for tensor in params.tensors() {
        for v in tensor {
            w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<ScorerParams> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let display = path.display().to_string();

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, &display, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            path: display,
            expected: CHECKPOINT_MAGIC,
            found: magic,
        });
    }
    let version = read_u32(&mut r, &display, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: display,
            version,
        });
    }
    let f = read_u64(&mut r, &display, "embedding dim")? as usize;
    let dims = ScorerDims {
        latent: read_u64(&mut r, &display, "latent dim")? as usize,
        hidden1: read_u64(&mut r, &display, "hidden1 dim")? as usize,
        hidden2: read_u64(&mut r, &display, "hidden2 dim")? as usize,
    };
    let mut params = ScorerParams::zeros(f, dims);
    let mut buf = [0u8; 8];
    for tensor in params.tensors_mut() {
        for v in tensor.iter_mut() {
            read_exact(&mut r, &mut buf, &display, "tensor payload")?;
            *v = f64::from_le_bytes(buf);
        }
    }
    let trailing = r.read(&mut buf).map_err(|e| Error::Io {
        path: display.clone(),
        source: e,
    })?;
    if trailing != 0 {
        return Err(Error::Truncated {
            path: display,
            detail: "trailing bytes after the declared payload".into(),
        });
    }
    Ok(params)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], path: &str, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated {
                path: path.to_string(),
                detail: format!("file ended while reading {what}"),
            }
        } else {
            Error::Io {
                path: path.to_string(),
                source: e,
            }
        }
    })
}

fn read_u32<R: Read>(r: &mut R, path: &str, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, path, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R, path: &str, what: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, path, what)?;
    Ok(u64::from_le_bytes(buf))
}
