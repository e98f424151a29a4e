//! Similarity computation, kNN edge selection, level-graph construction and
//! cross-level feature aggregation.
//!
//! The default similarity backend is cosine remapped to [0, 1]; scores from
//! an external scorer (e.g. PLDA) can be substituted through
//! [`SimilarityBackend`]. For levels above zero, similarity is computed on
//! the identity-feature half of each node representation.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::types::{EmbeddingSet, LevelGraph};
use crate::{Error, Result};

/// Symmetric n x n similarity matrix with entries in [0, 1] and unit
/// diagonal.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    values: Array2<f64>,
}

impl SimilarityMatrix {
    /// Wraps a precomputed matrix, verifying symmetry (within 1e-9), range
    /// and the unit diagonal.
    pub fn from_matrix(values: Array2<f64>) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n {
            return Err(Error::ShapeMismatch {
                context: "similarity matrix",
                expected: format!("{n}x{n}"),
                actual: format!("{}x{}", n, values.ncols()),
            });
        }
        for i in 0..n {
            if (values[[i, i]] - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "similarity diagonal entry {i} is {}, expected 1",
                    values[[i, i]]
                )));
            }
            for j in 0..n {
                let v = values[[i, j]];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidConfig(format!(
                        "similarity entry ({i}, {j}) = {v} outside [0, 1]"
                    )));
                }
                if (v - values[[j, i]]).abs() > 1e-9 {
                    return Err(Error::InvalidConfig(format!(
                        "similarity not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// Produces the similarity matrix for a set of node features. Implementors
/// must return symmetric scores in [0, 1] with unit diagonal.
pub trait SimilarityBackend: Sync {
    fn similarity(&self, features: ArrayView2<'_, f64>) -> Result<SimilarityMatrix>;
}

/// Cosine similarity remapped from [-1, 1] to [0, 1].
#[derive(Debug, Clone, Copy, Default)]
pub struct CosineSimilarity;

impl SimilarityBackend for CosineSimilarity {
    fn similarity(&self, features: ArrayView2<'_, f64>) -> Result<SimilarityMatrix> {
        similarity(features)
    }
}

/// Fixed scores loaded from file. Only usable while the node count matches
/// the stored matrix; rescoring an aggregated level needs a real backend.
#[derive(Debug, Clone)]
pub struct PrecomputedSimilarity(pub SimilarityMatrix);

impl SimilarityBackend for PrecomputedSimilarity {
    fn similarity(&self, features: ArrayView2<'_, f64>) -> Result<SimilarityMatrix> {
        if features.nrows() != self.0.n() {
            return Err(Error::ShapeMismatch {
                context: "precomputed similarity",
                expected: format!("{} nodes", self.0.n()),
                actual: format!("{} nodes", features.nrows()),
            });
        }
        Ok(self.0.clone())
    }
}

/// Cosine similarity of every row pair, remapped to [0, 1]; the diagonal is
/// forced to exactly 1. Errors on a zero-norm row.
pub fn similarity(features: ArrayView2<'_, f64>) -> Result<SimilarityMatrix> {
    let n = features.nrows();
    let mut normalized = features.to_owned();
    for (row, mut r) in normalized.outer_iter_mut().enumerate() {
        let norm = r.dot(&r).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNormRow { row });
        }
        r.mapv_inplace(|v| v / norm);
    }
    // Gram matrix of normalized rows; bitwise symmetric because S[i][j] and
    // S[j][i] sum the same products in the same order.
    let mut values = normalized.dot(&normalized.t());
    values.mapv_inplace(|v| ((v + 1.0) / 2.0).clamp(0.0, 1.0));
    for i in 0..n {
        values[[i, i]] = 1.0;
    }
    Ok(SimilarityMatrix { values })
}

/// Directed kNN edges: each node connects to its `min(k, n-1)` most similar
/// other nodes. Ties break toward the lower node index; no self-loops.
///
/// Returns `(edges, edge_similarity)` grouped by source node ascending.
pub fn knn_edges(sim: &SimilarityMatrix, k: usize) -> Result<(Vec<(usize, usize)>, Vec<f64>)> {
    let n = sim.n();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let degree = k.min(n - 1);
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut candidates: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, sim.get(i, j)))
                .collect();
            // Total order: similarity descending, then index ascending.
            let by_rank = |a: &(usize, f64), b: &(usize, f64)| {
                b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0))
            };
            if degree < candidates.len() {
                candidates.select_nth_unstable_by(degree.saturating_sub(1), by_rank);
                candidates.truncate(degree);
            }
            candidates.sort_unstable_by(by_rank);
            candidates
        })
        .collect();

    let mut edges = Vec::with_capacity(n * degree);
    let mut sims = Vec::with_capacity(n * degree);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, s) in row {
            edges.push((i, j));
            sims.push(s);
        }
    }
    Ok((edges, sims))
}

/// Builds the level-0 graph: every embedding is its own cluster, so the
/// node representation is the raw embedding duplicated (identity and
/// average halves are equal) and origins are singletons.
pub fn build_level0(set: &EmbeddingSet, k: usize) -> Result<LevelGraph> {
    build_level0_with(set, k, &CosineSimilarity)
}

/// [`build_level0`] with a custom similarity backend.
pub fn build_level0_with(
    set: &EmbeddingSet,
    k: usize,
    backend: &dyn SimilarityBackend,
) -> Result<LevelGraph> {
    set.validate().map_err(Error::InvalidEmbeddings)?;
    let n = set.len();
    let f = set.dim();
    let sim = backend.similarity(set.embeddings.view())?;
    let (edges, edge_similarity) = knn_edges(&sim, k)?;
    let mut node_features = Array2::zeros((n, 2 * f));
    node_features
        .slice_mut(ndarray::s![.., ..f])
        .assign(&set.embeddings);
    node_features
        .slice_mut(ndarray::s![.., f..])
        .assign(&set.embeddings);
    let node_origin = (0..n).map(|i| vec![i]).collect();
    Ok(LevelGraph::new(0, k, node_features, edges, edge_similarity, node_origin))
}

/// Collapses each cluster of `graph` into one node of the next level.
///
/// The new identity feature is the identity feature of the member with the
/// highest density (ties toward the lowest node index); the new average
/// feature is the arithmetic mean of member identity features. Edges are
/// rebuilt from similarity over the new identity features with the graph's
/// original `k`.
pub fn aggregate(graph: &LevelGraph, clusters: &[usize], density: &[f64]) -> Result<LevelGraph> {
    aggregate_with(graph, clusters, density, &CosineSimilarity)
}

/// [`aggregate`] with a custom similarity backend.
pub fn aggregate_with(
    graph: &LevelGraph,
    clusters: &[usize],
    density: &[f64],
    backend: &dyn SimilarityBackend,
) -> Result<LevelGraph> {
    let n = graph.n();
    if clusters.len() != n {
        return Err(Error::ShapeMismatch {
            context: "cluster assignment",
            expected: format!("{n} entries"),
            actual: format!("{} entries", clusters.len()),
        });
    }
    if density.len() != n {
        return Err(Error::ShapeMismatch {
            context: "density vector",
            expected: format!("{n} entries"),
            actual: format!("{} entries", density.len()),
        });
    }
    let n_clusters = clusters.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for (node, &c) in clusters.iter().enumerate() {
        members[c].push(node);
    }
    if let Some(empty) = members.iter().position(Vec::is_empty) {
        return Err(Error::Internal(format!(
            "cluster {empty} is empty; assignments must use dense ids"
        )));
    }

    let f = graph.embedding_dim();
    let identities = graph.identity_features();
    let mut node_features = Array2::zeros((n_clusters, 2 * f));
    let mut node_origin = Vec::with_capacity(n_clusters);
    for (c, member) in members.iter().enumerate() {
        // Representative: member with peak density, lowest index on ties.
        let mut rep = member[0];
        for &m in &member[1..] {
            if density[m] > density[rep] {
                rep = m;
            }
        }
        let mut average = Array1::<f64>::zeros(f);
        for &m in member {
            average += &identities.row(m);
        }
        average /= member.len() as f64;
        node_features
            .slice_mut(ndarray::s![c, ..f])
            .assign(&identities.row(rep));
        node_features.slice_mut(ndarray::s![c, f..]).assign(&average);

        let mut origin: Vec<usize> = member
            .iter()
            .flat_map(|&m| graph.node_origin[m].iter().copied())
            .collect();
        origin.sort_unstable();
        node_origin.push(origin);
    }

    let sim = backend.similarity(node_features.view().split_at(Axis(1), f).0)?;
    let (edges, edge_similarity) = if n_clusters == 0 {
        (Vec::new(), Vec::new())
    } else {
        knn_edges(&sim, graph.k)?
    };
    Ok(LevelGraph::new(
        graph.level + 1,
        graph.k,
        node_features,
        edges,
        edge_similarity,
        node_origin,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn set_from(rows: Array2<f64>) -> EmbeddingSet {
        EmbeddingSet::new("t", rows)
    }

    #[test]
    fn identical_rows_have_similarity_one() {
        let s = similarity(array![[1.0, 2.0], [2.0, 4.0]].view()).unwrap();
        assert_abs_diff_eq!(s.get(0, 1), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_rows_map_to_half() {
        let s = similarity(array![[1.0, 0.0], [0.0, 3.0]].view()).unwrap();
        assert_abs_diff_eq!(s.get(0, 1), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn antipodal_rows_map_to_zero() {
        let s = similarity(array![[1.0, 1.0], [-2.0, -2.0]].view()).unwrap();
        assert_abs_diff_eq!(s.get(0, 1), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_norm_row_is_reported() {
        let err = similarity(array![[1.0, 0.0], [0.0, 0.0]].view()).unwrap_err();
        match err {
            Error::ZeroNormRow { row } => assert_eq!(row, 1),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn similarity_is_scale_invariant_per_row() {
        let base = array![[1.0, 2.0, 3.0], [0.5, -1.0, 2.0], [3.0, 0.0, -1.0]];
        let mut scaled = base.clone();
        for (i, factor) in [(0, 7.5), (1, 0.001), (2, 42.0)] {
            scaled.row_mut(i).mapv_inplace(|v| v * factor);
        }
        let s1 = similarity(base.view()).unwrap();
        let s2 = similarity(scaled.view()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(s1.get(i, j), s2.get(i, j), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn knn_on_three_nodes_with_large_k_is_complete() {
        let s = similarity(array![[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]].view()).unwrap();
        let (edges, _) = knn_edges(&s, 5).unwrap();
        assert_eq!(edges.len(), 6);
        for i in 0..3usize {
            for j in 0..3usize {
                assert_eq!(edges.contains(&(i, j)), i != j);
            }
        }
    }

    #[test]
    fn knn_on_single_node_has_no_edges() {
        let s = similarity(array![[1.0, 1.0]].view()).unwrap();
        let (edges, sims) = knn_edges(&s, 10).unwrap();
        assert!(edges.is_empty());
        assert!(sims.is_empty());
    }

    #[test]
    fn knn_matches_brute_force_row_sort() {
        // 4-point instance with a known similarity ordering.
        let values = array![
            [1.0, 0.9, 0.3, 0.6],
            [0.9, 1.0, 0.2, 0.9],
            [0.3, 0.2, 1.0, 0.5],
            [0.6, 0.9, 0.5, 1.0],
        ];
        let s = SimilarityMatrix::from_matrix(values.clone()).unwrap();
        let (edges, sims) = knn_edges(&s, 2).unwrap();

        // Independent oracle: full sort of each row.
        let mut expected = Vec::new();
        for i in 0..4usize {
            let mut row: Vec<(usize, f64)> = (0..4).filter(|&j| j != i).map(|j| (j, values[[i, j]])).collect();
            row.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            for (j, v) in row.into_iter().take(2) {
                expected.push(((i, j), v));
            }
        }
        let got: Vec<((usize, usize), f64)> = edges.into_iter().zip(sims).collect();
        assert_eq!(got, expected);
        // Node 1 ties between 0 and 3 at 0.9; the lower index wins first place.
        assert_eq!(got[2].0, (1, 0));
        assert_eq!(got[3].0, (1, 3));
    }

    #[test]
    fn knn_is_invariant_under_monotone_transform() {
        let feats = array![
            [1.0, 0.2, 0.1],
            [0.8, 0.3, 0.0],
            [-0.2, 1.0, 0.4],
            [0.1, -0.9, 0.8],
            [0.5, 0.5, 0.5],
        ];
        let s = similarity(feats.view()).unwrap();
        let squared = SimilarityMatrix::from_matrix(s.values().mapv(|v| v * v)).unwrap();
        let (e1, _) = knn_edges(&s, 2).unwrap();
        let (e2, _) = knn_edges(&squared, 2).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn level0_duplicates_embedding_halves() {
        let set = set_from(array![
            [1.0, 0.0],
            [0.9, 0.1],
            [0.0, 1.0],
            [0.2, 0.8],
            [0.5, 0.5],
        ]);
        let g = build_level0(&set, 2).unwrap();
        assert_eq!(g.feature_dim(), 4);
        assert_eq!(g.n(), 5);
        for i in 0..5 {
            assert_eq!(g.node_features[[i, 0]], g.node_features[[i, 2]]);
            assert_eq!(g.node_features[[i, 1]], g.node_features[[i, 3]]);
            assert_eq!(g.node_origin[i], vec![i]);
        }
        assert_eq!(g.check_invariants(), Ok(()));
    }

    #[test]
    fn level0_single_node_has_no_edges() {
        let g = build_level0(&set_from(array![[3.0, 4.0]]), 8).unwrap();
        assert_eq!(g.n(), 1);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn level0_clamps_k_to_n_minus_one() {
        let rows = Array2::from_shape_fn((40, 3), |(i, j)| ((i * 7 + j * 13) % 17) as f64 + 1.0);
        let g = build_level0(&set_from(rows), 60).unwrap();
        for i in 0..40 {
            assert_eq!(g.out_degree(i), 39);
        }
    }

    #[test]
    fn aggregate_of_singletons_preserves_identity_features() {
        let set = set_from(array![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.5]]);
        let g = build_level0(&set, 1).unwrap();
        let next = aggregate(&g, &[0, 1, 2], &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(next.n(), 3);
        for i in 0..3 {
            let id_old = g.identity_features().row(i).to_owned();
            let id_new = next.identity_features().row(i).to_owned();
            let avg_new = next.average_features().row(i).to_owned();
            assert_eq!(id_old, id_new);
            assert_eq!(id_new, avg_new);
        }
        assert_eq!(next.level, 1);
    }

    #[test]
    fn aggregate_picks_peak_density_identity() {
        let set = set_from(array![[1.0, 0.0], [0.0, 1.0]]);
        let g = build_level0(&set, 1).unwrap();
        let next = aggregate(&g, &[0, 0], &[0.9, 0.4]).unwrap();
        assert_eq!(next.n(), 1);
        assert_eq!(next.identity_features().row(0).to_vec(), vec![1.0, 0.0]);
        assert_eq!(next.average_features().row(0).to_vec(), vec![0.5, 0.5]);
        assert_eq!(next.node_origin[0], vec![0, 1]);
        assert!(next.edges.is_empty());
    }

    #[test]
    fn aggregate_matches_arithmetic_oracle_on_two_clusters() {
        let rows = array![
            [1.0, 0.0],
            [0.8, 0.2],
            [0.9, 0.1],
            [0.0, 1.0],
            [0.2, 0.8],
            [0.1, 0.9],
        ];
        let set = set_from(rows.clone());
        let g = build_level0(&set, 2).unwrap();
        let clusters = [0, 0, 0, 1, 1, 1];
        let density = [0.5, 0.7, 0.6, 0.3, 0.9, 0.2];
        let next = aggregate(&g, &clusters, &density).unwrap();

        // Oracle: means and argmax computed by plain loops over the inputs.
        for (c, member) in [(0usize, vec![0usize, 1, 2]), (1, vec![3, 4, 5])] {
            let rep = *member
                .iter()
                .max_by(|&&a, &&b| density[a].partial_cmp(&density[b]).unwrap())
                .unwrap();
            let mut mean = [0.0f64; 2];
            for &m in &member {
                mean[0] += rows[[m, 0]] / member.len() as f64;
                mean[1] += rows[[m, 1]] / member.len() as f64;
            }
            assert_eq!(next.identity_features().row(c).to_vec(), rows.row(rep).to_vec());
            assert_abs_diff_eq!(next.average_features()[[c, 0]], mean[0], epsilon = 1e-12);
            assert_abs_diff_eq!(next.average_features()[[c, 1]], mean[1], epsilon = 1e-12);
        }
        assert_eq!(next.node_origin[0], vec![0, 1, 2]);
        assert_eq!(next.node_origin[1], vec![3, 4, 5]);
    }

    #[test]
    fn aggregate_rejects_empty_cluster_id() {
        let set = set_from(array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let g = build_level0(&set, 1).unwrap();
        // Id 1 is never used, so the dense range {0, 1, 2} has a hole.
        let err = aggregate(&g, &[0, 0, 2], &[0.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Internal(_)));
    }

    #[test]
    fn aggregate_preserves_total_origin_count() {
        let rows = Array2::from_shape_fn((9, 3), |(i, j)| (i as f64 + 1.0) * 0.3 + j as f64);
        let set = set_from(rows);
        let g = build_level0(&set, 3).unwrap();
        let clusters = [0, 1, 2, 0, 1, 2, 0, 1, 0];
        let density = [0.1; 9];
        let next = aggregate(&g, &clusters, &density).unwrap();
        assert_eq!(next.total_origins(), g.total_origins());
        assert_eq!(next.check_invariants(), Ok(()));
    }

    #[test]
    fn singleton_aggregate_rebuilds_isomorphic_edges() {
        let rows = array![
            [1.0, 0.3],
            [0.7, 0.7],
            [-0.5, 1.0],
            [0.9, -0.1],
        ];
        let set = set_from(rows);
        let g = build_level0(&set, 2).unwrap();
        let next = aggregate(&g, &[0, 1, 2, 3], &[0.0; 4]).unwrap();
        assert_eq!(next.edges, g.edges);
        for (a, b) in next.edge_similarity.iter().zip(&g.edge_similarity) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn precomputed_backend_rejects_wrong_node_count() {
        let s = SimilarityMatrix::from_matrix(array![[1.0, 0.4], [0.4, 1.0]]).unwrap();
        let backend = PrecomputedSimilarity(s);
        let feats = array![[1.0], [2.0], [3.0]];
        assert!(backend.similarity(feats.view()).is_err());
    }
}
