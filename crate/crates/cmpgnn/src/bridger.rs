//! Candidate-set construction, per-epoch cross-domain edge selection, and
//! the negative samplers behind the reconstruction and contrastive losses.
//!
//! The candidate table is built once before training from pre-trained
//! encoder embeddings (cosine similarity, exactly `N_S * N_T` evaluations)
//! and never changes. Each epoch then scores only the `<= K * N_T` candidate
//! pairs with the link predictor; both counts are instrumented so the
//! complexity contract is testable.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graphstore::CombinedGraph;
use crate::model::edge_score;
use crate::numkernel::{dense::dot, DenseMatrix};

/// Per-target-node candidate lists: up to `k` source nodes (global ids),
/// similarity-descending. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTable {
    candidates: Vec<Vec<usize>>,
    k: usize,
    built_from: String,
    similarity_evals: u64,
}

impl CandidateTable {
    pub fn candidates(&self, target_local: usize) -> &[usize] {
        &self.candidates[target_local]
    }

    pub fn target_count(&self) -> usize {
        self.candidates.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn built_from(&self) -> &str {
        &self.built_from
    }

    /// Number of similarity evaluations performed during construction.
    pub fn similarity_evals(&self) -> u64 {
        self.similarity_evals
    }

    /// FNV-1a over the candidate lists; stable across runs and platforms.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.k as u64);
        for list in &self.candidates {
            eat(list.len() as u64);
            for &c in list {
                eat(c as u64);
            }
        }
        h
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        f64::NEG_INFINITY
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Rank every source node by cosine similarity to each target node and keep
/// the top `k`. Zero-norm source embeddings rank last (similarity treated as
/// negative infinity); a zero-norm target embedding is an error.
pub fn build_candidate_table(
    h_s_pre: &DenseMatrix,
    h_t_pre: &DenseMatrix,
    k: usize,
    built_from: impl Into<String>,
) -> Result<CandidateTable> {
    if k == 0 {
        return Err(Error::Validation("candidate size k must be >= 1".into()));
    }
    if h_s_pre.cols() != h_t_pre.cols() {
        return Err(Error::Dimension(format!(
            "embedding widths differ: {} vs {}",
            h_s_pre.cols(),
            h_t_pre.cols()
        )));
    }
    let n_s = h_s_pre.rows();
    let n_t = h_t_pre.rows();
    let mut similarity_evals = 0u64;
    let mut candidates = Vec::with_capacity(n_t);
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(n_s);
    for i in 0..n_t {
        let t_row = h_t_pre.row(i);
        if dot(t_row, t_row) == 0.0 {
            return Err(Error::Validation(format!(
                "target node {} has an all-zero embedding",
                i
            )));
        }
        scored.clear();
        for j in 0..n_s {
            similarity_evals += 1;
            scored.push((cosine(h_s_pre.row(j), t_row), j));
        }
        // Similarity-descending, ties broken by source id for determinism.
        scored.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        candidates.push(scored.iter().take(k).map(|&(_, j)| j).collect());
    }
    Ok(CandidateTable {
        candidates,
        k,
        built_from: built_from.into(),
        similarity_evals,
    })
}

/// One scored candidate pair. `accepted` holds exactly when `score` exceeds
/// the threshold it was compared against; `weight` is the edge weight an
/// accepted pair contributes (the predictor score, or 1 for the
/// random-insertion baseline).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InsertionDecision {
    pub target_node: usize,
    pub source_node: usize,
    pub score: f64,
    pub weight: f64,
    pub accepted: bool,
}

/// Score every candidate pair with the link predictor and flag those above
/// `threshold`. Returns the decisions and the exact number of predictor
/// evaluations (at most `k * N_T`).
pub fn score_and_select(
    z_c: &DenseMatrix,
    table: &CandidateTable,
    offset: usize,
    threshold: f64,
) -> (Vec<InsertionDecision>, u64) {
    let mut evals = 0u64;
    let mut decisions = Vec::new();
    for i in 0..table.target_count() {
        let global_target = offset + i;
        let z_i = z_c.row(global_target);
        for &j in table.candidates(i) {
            evals += 1;
            let score = edge_score(z_i, z_c.row(j));
            decisions.push(InsertionDecision {
                target_node: global_target,
                source_node: j,
                score,
                weight: score,
                accepted: score > threshold,
            });
        }
    }
    (decisions, evals)
}

/// Deterministic per-(seed, epoch, node, purpose) PRNG stream, so sampling
/// does not depend on the order nodes are visited in.
pub fn stream_rng(seed: u64, epoch: u64, node: u64, purpose: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[0..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&epoch.to_le_bytes());
    bytes[16..24].copy_from_slice(&node.to_le_bytes());
    bytes[24..32].copy_from_slice(&purpose.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

/// `r`-th smallest id not present in the sorted `excluded` list.
fn nth_valid(excluded: &[usize], r: usize) -> usize {
    let mut skipped = 0;
    loop {
        let id = r + skipped;
        let s = excluded.partition_point(|&e| e <= id);
        if s == skipped {
            return id;
        }
        skipped = s;
    }
}

/// Uniform sample of `m` distinct ids from `[0, n) \ excluded` (sorted,
/// deduplicated). Exactly uniform: ranks are drawn without replacement and
/// unranked against the exclusion list.
pub fn sample_excluding(
    n: usize,
    excluded: &[usize],
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    debug_assert!(excluded.windows(2).all(|w| w[0] < w[1]));
    let valid = n - excluded.iter().filter(|&&e| e < n).count();
    if m > valid {
        return Err(Error::Sampling(format!(
            "requested {} samples but only {} of {} nodes are eligible",
            m, valid, n
        )));
    }
    Ok(rand::seq::index::sample(rng, valid, m)
        .into_iter()
        .map(|r| nth_valid(excluded, r))
        .collect())
}

/// Sorted exclusion set for edge-negative sampling at a global node:
/// the node itself plus its neighborhood (original edges, and inserted edges
/// when `include_inserted`).
pub fn edge_negative_exclusions(
    graph: &CombinedGraph,
    anchor: usize,
    include_inserted: bool,
) -> Vec<usize> {
    let offset = graph.offset();
    let mut excluded = vec![anchor];
    if graph.is_source_global(anchor) {
        let (cols, _) = graph.source().adjacency().row_entries(anchor);
        excluded.extend_from_slice(cols);
    } else {
        let (cols, _) = graph.target().adjacency().row_entries(anchor - offset);
        excluded.extend(cols.iter().map(|&c| c + offset));
    }
    if include_inserted {
        for e in graph.inserted_edges() {
            if e.source_global == anchor {
                excluded.push(e.target_global);
            } else if e.target_global == anchor {
                excluded.push(e.source_global);
            }
        }
    }
    excluded.sort_unstable();
    excluded.dedup();
    excluded
}

/// `m` nodes drawn uniformly without replacement from the combined node set
/// minus the anchor and its neighborhood.
pub fn sample_edge_negatives(
    graph: &CombinedGraph,
    anchor: usize,
    m: usize,
    include_inserted: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::Sampling("need at least one negative".into()));
    }
    let excluded = edge_negative_exclusions(graph, anchor, include_inserted);
    sample_excluding(graph.node_count(), &excluded, m, rng)
}

/// `m` target-local node ids drawn uniformly without replacement from
/// `[0, n_t) \ {anchor}`.
pub fn sample_node_negatives(
    n_t: usize,
    anchor: usize,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if n_t == 0 || m > n_t - 1 {
        return Err(Error::Sampling(format!(
            "requested {} negatives from {} non-anchor target nodes",
            m,
            n_t.saturating_sub(1)
        )));
    }
    sample_excluding(n_t, &[anchor], m, rng)
}

/// One accepted cross-domain edge as logged per epoch, consumed by the
/// metrics stream and emitted as `inserted_edges.csv`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EdgeLogEntry {
    pub epoch: usize,
    pub target_node: usize,
    pub source_node: usize,
    pub weight: f64,
    /// Present only when both domains carry labels.
    pub same_class: Option<bool>,
}

/// Link-predictor-free baseline: sample `budget` distinct random
/// cross-domain pairs and flag those whose pre-trained-embedding cosine
/// similarity exceeds `t_sim`. Accepted pairs carry weight 1.
pub fn random_insert_baseline(
    h_s_pre: &DenseMatrix,
    h_t_pre: &DenseMatrix,
    t_sim: f64,
    budget: usize,
    offset: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<InsertionDecision> {
    let n_s = h_s_pre.rows();
    let n_t = h_t_pre.rows();
    let total = n_s * n_t;
    let budget = budget.min(total);
    rand::seq::index::sample(rng, total, budget)
        .into_iter()
        .map(|flat| {
            let i = flat / n_s;
            let j = flat % n_s;
            let score = cosine(h_t_pre.row(i), h_s_pre.row(j));
            InsertionDecision {
                target_node: offset + i,
                source_node: j,
                score,
                weight: 1.0,
                accepted: score > t_sim,
            }
        })
        .collect()
}
