//! Hierarchical inference: score a level, pick candidate edges, merge,
//! aggregate, repeat until nothing merges.
//!
//! Each node with a non-empty candidate set contributes exactly one merge
//! edge (its best-weighted denser neighbor); the undirected connected
//! components of those edges become the clusters of the next level. A kNN
//! graph over more than one node always has edges, so "the graph has no
//! edges" never fires literally — the effective fixed point is an empty
//! merge set, which is how termination is implemented.

use crate::types::{
    EdgeScores, EmbeddingSet, Hierarchy, HierarchyLevel, LevelGraph, ScorerParams, Termination,
};
use crate::{gnn, simgraph, Error, Result};

/// Per-level scoring strategy used by [`infer_with`].
pub trait EdgeScorer: Sync {
    fn score_level(&self, graph: &LevelGraph) -> Result<EdgeScores>;
}

/// Scores levels with the trained model.
pub struct GnnScorer<'a> {
    pub params: &'a ScorerParams,
}

impl EdgeScorer for GnnScorer<'_> {
    fn score_level(&self, graph: &LevelGraph) -> Result<EdgeScores> {
        gnn::score(graph, self.params).map(|(_, scores)| scores)
    }
}

/// Ground-truth scorer: linkage probability is 1 iff an edge's endpoints
/// carry the same level-0 label, and densities follow from those weights.
///
/// Meaningful with thresholds in (0, 1]; at `p_tau <= 0` cross-label edges
/// qualify as candidates and merged nodes stop being label-pure.
pub struct OracleScorer<'a> {
    pub labels: &'a [usize],
}

impl OracleScorer<'_> {
    fn node_labels(&self, graph: &LevelGraph) -> Vec<usize> {
        graph
            .node_origin
            .iter()
            .map(|origin| {
                let label = self.labels[origin[0]];
                debug_assert!(
                    origin.iter().all(|&o| self.labels[o] == label),
                    "origin set is not label-pure"
                );
                label
            })
            .collect()
    }
}

impl EdgeScorer for OracleScorer<'_> {
    fn score_level(&self, graph: &LevelGraph) -> Result<EdgeScores> {
        let node_labels = self.node_labels(graph);
        let linkage_prob: Vec<f64> = graph
            .edges
            .iter()
            .map(|&(i, j)| {
                if node_labels[i] == node_labels[j] {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let edge_weight = gnn::edge_weights(&linkage_prob);
        let density = gnn::node_density(&edge_weight, graph);
        Ok(EdgeScores {
            linkage_prob,
            edge_weight,
            density,
        })
    }
}

/// Per node, the out-edges whose destination is at least as dense and whose
/// linkage probability clears the threshold. Entries are indices into
/// `graph.edges`.
pub fn candidate_set(graph: &LevelGraph, scores: &EdgeScores, p_tau: f64) -> Vec<Vec<usize>> {
    (0..graph.n())
        .map(|i| {
            graph
                .out_range(i)
                .filter(|&e| {
                    let (_, j) = graph.edges[e];
                    scores.density[i] <= scores.density[j] && scores.linkage_prob[e] >= p_tau
                })
                .collect()
        })
        .collect()
}

/// Picks, for every node with candidates, the edge of maximum weight (ties
/// toward the lower destination index). Returns (src, dst) merge pairs, at
/// most one per source node.
pub fn select_merges(
    graph: &LevelGraph,
    candidates: &[Vec<usize>],
    scores: &EdgeScores,
) -> Vec<(usize, usize)> {
    let mut merges = Vec::new();
    for (i, cand) in candidates.iter().enumerate() {
        let Some(&first) = cand.first() else {
            continue;
        };
        let mut best = first;
        for &e in &cand[1..] {
            let j = graph.edges[e].1;
            let j_best = graph.edges[best].1;
            let w = scores.edge_weight[e];
            let w_best = scores.edge_weight[best];
            if w > w_best || (w == w_best && j < j_best) {
                best = e;
            }
        }
        merges.push((i, graph.edges[best].1));
    }
    merges
}

/// Union-find over node ids; used to turn merge edges into components.
struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut node: usize) -> usize {
        let mut root = node;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[node] != node {
            let next = self.parent[node];
            self.parent[node] = root;
            node = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let mut a = self.find(a);
        let mut b = self.find(b);
        if a == b {
            return;
        }
        if self.rank[a] < self.rank[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        if self.rank[a] == self.rank[b] {
            self.rank[a] += 1;
        }
    }
}

/// Undirected connected components of the merge edges over `n` nodes.
/// Isolated nodes become singletons; ids are dense and ordered by each
/// component's smallest member index.
pub fn components(merges: &[(usize, usize)], n: usize) -> Vec<usize> {
    let mut dsu = DisjointSet::new(n);
    for &(a, b) in merges {
        dsu.union(a, b);
    }
    let mut ids = vec![usize::MAX; n];
    let mut assignment = vec![0usize; n];
    let mut next = 0usize;
    for node in 0..n {
        let root = dsu.find(node);
        if ids[root] == usize::MAX {
            ids[root] = next;
            next += 1;
        }
        assignment[node] = ids[root];
    }
    assignment
}

/// Knobs of the level loop.
#[derive(Debug, Clone, Copy)]
pub struct InferOptions {
    /// Nearest neighbors per node (clamped to n-1 at every level).
    pub k: usize,
    /// Linkage-probability threshold for candidate edges.
    pub p_tau: f64,
    /// Maximum number of merge rounds.
    pub max_levels: usize,
}

impl Default for InferOptions {
    fn default() -> Self {
        Self {
            k: 60,
            p_tau: 0.0,
            max_levels: 15,
        }
    }
}

/// Runs the level loop with an arbitrary scorer. Terminates when a level
/// has at most one node, when no merge edges are selected, or when
/// `max_levels` rounds have run; each merge round strictly reduces the node
/// count, so the loop always stops.
pub fn infer_with(
    set: &EmbeddingSet,
    scorer: &dyn EdgeScorer,
    opts: InferOptions,
) -> Result<Hierarchy> {
    if opts.max_levels == 0 {
        return Err(Error::InvalidConfig(
            "max_levels must be at least 1".into(),
        ));
    }
    let mut graph = simgraph::build_level0(set, opts.k)?;
    let mut levels: Vec<HierarchyLevel> = Vec::new();
    let termination;
    loop {
        if graph.n() <= 1 {
            termination = Termination::SingleNode;
            break;
        }
        if levels.len() >= opts.max_levels {
            termination = Termination::LevelCap;
            break;
        }
        let scores = scorer.score_level(&graph)?;
        let candidates = candidate_set(&graph, &scores, opts.p_tau);
        let merges = select_merges(&graph, &candidates, &scores);
        if merges.is_empty() {
            termination = Termination::NoMerges;
            break;
        }
        let assignment = components(&merges, graph.n());
        let next = simgraph::aggregate(&graph, &assignment, &scores.density)?;
        debug_assert!(next.n() < graph.n());
        levels.push(HierarchyLevel { graph, assignment });
        graph = next;
    }

    let mut final_labels = vec![0usize; set.len()];
    for (node, origin) in graph.node_origin.iter().enumerate() {
        for &idx in origin {
            final_labels[idx] = node;
        }
    }
    Ok(Hierarchy {
        levels,
        final_labels,
        termination,
    })
}

/// Full inference with the trained scorer.
pub fn sharc_infer(
    set: &EmbeddingSet,
    params: &ScorerParams,
    opts: InferOptions,
) -> Result<Hierarchy> {
    infer_with(set, &GnnScorer { params }, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgraph::build_level0;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_graph(n: usize, k: usize, seed: u64) -> (LevelGraph, EdgeScores) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feats = Array2::from_shape_fn((n, 3), |_| rng.gen_range(-1.0..1.0));
        let g = build_level0(&EmbeddingSet::new("t", feats), k).unwrap();
        let linkage_prob: Vec<f64> = (0..g.edges.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let edge_weight = gnn::edge_weights(&linkage_prob);
        let density = gnn::node_density(&edge_weight, &g);
        let scores = EdgeScores {
            linkage_prob,
            edge_weight,
            density,
        };
        (g, scores)
    }

    #[test]
    fn threshold_above_one_empties_all_candidate_sets() {
        let (g, scores) = random_graph(6, 3, 1);
        let cand = candidate_set(&g, &scores, 1.1);
        assert!(cand.iter().all(Vec::is_empty));
    }

    #[test]
    fn equal_densities_allow_mutual_candidacy() {
        let (g, _) = random_graph(2, 1, 2);
        let scores = EdgeScores {
            linkage_prob: vec![0.9, 0.9],
            edge_weight: vec![0.8, 0.8],
            density: vec![0.4, 0.4],
        };
        let cand = candidate_set(&g, &scores, 0.5);
        assert_eq!(cand[0], vec![0]);
        assert_eq!(cand[1], vec![1]);
        // The mutual 2-cycle collapses to one component.
        let merges = select_merges(&g, &cand, &scores);
        assert_eq!(merges, vec![(0, 1), (1, 0)]);
        assert_eq!(components(&merges, 2), vec![0, 0]);
    }

    #[test]
    fn candidate_set_matches_brute_force_filter() {
        for seed in 0..20 {
            let (g, scores) = random_graph(5, 3, seed);
            let p_tau = 0.1 * (seed % 10) as f64;
            let cand = candidate_set(&g, &scores, p_tau);
            // Exhaustive check of the three conditions per edge.
            for (e, &(i, j)) in g.edges.iter().enumerate() {
                let qualifies =
                    scores.density[i] <= scores.density[j] && scores.linkage_prob[e] >= p_tau;
                assert_eq!(cand[i].contains(&e), qualifies, "seed {seed} edge {e}");
            }
        }
    }

    #[test]
    fn empty_candidates_select_nothing() {
        let (g, scores) = random_graph(4, 2, 3);
        let cand = vec![Vec::new(); 4];
        assert!(select_merges(&g, &cand, &scores).is_empty());
    }

    #[test]
    fn select_merges_picks_argmax_weight() {
        // Node 0 sees j=1 with weight 0.4 and j=2 with weight 0.9.
        let (g, _) = random_graph(3, 2, 4);
        let mut scores = EdgeScores {
            linkage_prob: vec![0.5; g.edges.len()],
            edge_weight: vec![0.0; g.edges.len()],
            density: vec![0.0; 3],
        };
        let r = g.out_range(0);
        for e in r.clone() {
            scores.edge_weight[e] = if g.edges[e].1 == 1 { 0.4 } else { 0.9 };
        }
        let cand: Vec<Vec<usize>> = vec![r.collect(), Vec::new(), Vec::new()];
        let merges = select_merges(&g, &cand, &scores);
        assert_eq!(merges, vec![(0, 2)]);
    }

    #[test]
    fn select_merges_matches_exhaustive_argmax() {
        for seed in 20..40 {
            let (g, scores) = random_graph(8, 4, seed);
            let cand = candidate_set(&g, &scores, 0.3);
            let merges = select_merges(&g, &cand, &scores);
            // Oracle: direct scan per node over all out-edges.
            let mut expected = Vec::new();
            for i in 0..g.n() {
                let mut best: Option<(f64, usize)> = None;
                for e in g.out_range(i) {
                    let j = g.edges[e].1;
                    if scores.density[i] <= scores.density[j]
                        && scores.linkage_prob[e] >= 0.3
                    {
                        let w = scores.edge_weight[e];
                        let better = match best {
                            None => true,
                            Some((bw, bj)) => w > bw || (w == bw && j < bj),
                        };
                        if better {
                            best = Some((w, j));
                        }
                    }
                }
                if let Some((_, j)) = best {
                    expected.push((i, j));
                }
            }
            assert_eq!(merges, expected, "seed {seed}");
        }
    }

    #[test]
    fn no_edges_gives_singletons() {
        assert_eq!(components(&[], 4), vec![0, 1, 2, 3]);
    }

    #[test]
    fn chain_merges_transitively() {
        assert_eq!(components(&[(0, 1), (1, 2)], 3), vec![0, 0, 0]);
    }

    #[test]
    fn component_ids_are_ordered_by_smallest_member() {
        // {1, 3} and {0, 2}: node 0's component must get id 0.
        assert_eq!(components(&[(1, 3), (2, 0)], 4), vec![0, 1, 0, 1]);
    }

    #[test]
    fn components_match_flood_fill_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(900);
        for _ in 0..30 {
            let n = rng.gen_range(2..30);
            let m = rng.gen_range(0..n);
            let merges: Vec<(usize, usize)> = (0..m)
                .map(|_| {
                    let a = rng.gen_range(0..n);
                    let mut b = rng.gen_range(0..n);
                    while b == a {
                        b = rng.gen_range(0..n);
                    }
                    (a, b)
                })
                .collect();
            let got = components(&merges, n);

            // Oracle: BFS flood fill over the undirected adjacency.
            let mut adj = vec![Vec::new(); n];
            for &(a, b) in &merges {
                adj[a].push(b);
                adj[b].push(a);
            }
            let mut expected = vec![usize::MAX; n];
            let mut next = 0;
            for start in 0..n {
                if expected[start] != usize::MAX {
                    continue;
                }
                let mut queue = vec![start];
                expected[start] = next;
                while let Some(u) = queue.pop() {
                    for &v in &adj[u] {
                        if expected[v] == usize::MAX {
                            expected[v] = next;
                            queue.push(v);
                        }
                    }
                }
                next += 1;
            }
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn single_embedding_yields_one_label_and_no_levels() {
        let set = EmbeddingSet::new("t", Array2::from_shape_vec((1, 2), vec![1.0, 2.0]).unwrap());
        let params = ScorerParams::zeros(2, Default::default());
        let h = sharc_infer(&set, &params, InferOptions::default()).unwrap();
        assert_eq!(h.final_labels, vec![0]);
        assert_eq!(h.depth(), 0);
        assert_eq!(h.termination, Termination::SingleNode);
    }

    #[test]
    fn impossible_threshold_yields_singletons_after_one_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let feats = Array2::from_shape_fn((7, 2), |_| rng.gen_range(-1.0..1.0));
        let set = EmbeddingSet::new("t", feats);
        let params = ScorerParams::zeros(2, Default::default());
        let h = sharc_infer(
            &set,
            &params,
            InferOptions {
                k: 3,
                p_tau: 1.5,
                max_levels: 15,
            },
        )
        .unwrap();
        assert_eq!(h.final_labels, (0..7).collect::<Vec<_>>());
        assert_eq!(h.depth(), 0);
        assert_eq!(h.termination, Termination::NoMerges);
    }

    #[test]
    fn zero_max_levels_is_rejected() {
        let set = EmbeddingSet::new("t", Array2::zeros((2, 2)) + 1.0);
        let params = ScorerParams::zeros(2, Default::default());
        let err = sharc_infer(
            &set,
            &params,
            InferOptions {
                k: 1,
                p_tau: 0.5,
                max_levels: 0,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn oracle_scorer_recovers_well_separated_clusters() {
        // Three tight groups far apart in direction.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let centroids = [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, centroid) in centroids.iter().enumerate() {
            for _ in 0..5 {
                rows.push(centroid[0] + rng.gen_range(-0.05..0.05));
                rows.push(centroid[1] + rng.gen_range(-0.05..0.05));
                labels.push(c);
            }
        }
        let set = EmbeddingSet::new("t", Array2::from_shape_vec((15, 2), rows).unwrap());
        let scorer = OracleScorer { labels: &labels };
        let h = infer_with(
            &set,
            &scorer,
            InferOptions {
                k: 4,
                p_tau: 0.5,
                max_levels: 15,
            },
        )
        .unwrap();
        assert_eq!(h.final_labels, labels);
        assert_eq!(h.termination, Termination::NoMerges);
        assert_eq!(h.compose_labels(), h.final_labels);
    }

    #[test]
    fn node_count_strictly_decreases_and_labels_partition() {
        for seed in 50..60 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(5..40);
            let feats = Array2::from_shape_fn((n, 4), |_| rng.gen_range(-1.0..1.0));
            let set = EmbeddingSet::new("t", feats);
            let mut prng = ChaCha8Rng::seed_from_u64(seed + 1000);
            let params = ScorerParams::init(4, Default::default(), &mut prng);
            let h = sharc_infer(
                &set,
                &params,
                InferOptions {
                    k: 4,
                    p_tau: 0.4,
                    max_levels: 15,
                },
            )
            .unwrap();
            let mut prev = usize::MAX;
            for level in &h.levels {
                assert!(level.graph.n() < prev);
                prev = level.graph.n();
            }
            assert!(h.depth() <= n.min(15));
            // Every level-0 index labeled exactly once, ids dense.
            assert_eq!(h.final_labels.len(), n);
            let max = h.final_labels.iter().copied().max().unwrap();
            for c in 0..=max {
                assert!(h.final_labels.contains(&c));
            }
            assert_eq!(h.compose_labels(), h.final_labels);
        }
    }

    #[test]
    fn raising_threshold_only_removes_merges() {
        for seed in 70..90 {
            let (g, scores) = random_graph(12, 4, seed);
            let low = select_merges(&g, &candidate_set(&g, &scores, 0.2), &scores);
            let high = select_merges(&g, &candidate_set(&g, &scores, 0.7), &scores);
            for m in &high {
                assert!(low.contains(m), "seed {seed}: merge {m:?} appeared only at higher threshold");
            }
        }
    }
}
