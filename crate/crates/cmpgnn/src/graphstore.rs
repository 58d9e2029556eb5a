//! Graph construction, combined source+target graphs, symmetric
//! normalization, and cross-domain edge insertion.
//!
//! A combined graph starts block-diagonal: source adjacency in the top-left
//! block, target in the bottom-right, nothing in between. Training fills the
//! cross blocks with inserted edges whose weight is the link predictor's
//! score. Each application replaces the previous insertion set by default;
//! accumulation across epochs is available as a toggle for study.

use crate::bridger::InsertionDecision;
use crate::error::{Error, Result};
use crate::numkernel::{DenseMatrix, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    Source,
    Target,
}

impl std::fmt::Display for DomainTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DomainTag::Source => write!(f, "source"),
            DomainTag::Target => write!(f, "target"),
        }
    }
}

/// One domain's nodes: symmetric unweighted adjacency (stored weight 1, no
/// self-loops), an `N x d` feature matrix, and optional labels.
#[derive(Debug, Clone)]
pub struct Graph {
    node_count: usize,
    adjacency: SparseMatrix,
    features: DenseMatrix,
    labels: Option<Vec<usize>>,
    label_mask: Option<Vec<bool>>,
    domain: DomainTag,
}

impl Graph {
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn label_mask(&self) -> Option<&[bool]> {
        self.label_mask.as_deref()
    }

    pub fn domain(&self) -> DomainTag {
        self.domain
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Number of classes implied by the labels, when present.
    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().max().map_or(0, |&m| m + 1))
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    pub fn with_label_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.node_count {
            return Err(Error::Validation(format!(
                "label mask length {} != {} nodes",
                mask.len(),
                self.node_count
            )));
        }
        self.label_mask = Some(mask);
        Ok(self)
    }
}

/// Build a graph from an undirected edge list. Edges are symmetrized and
/// deduplicated as unordered pairs: `(0, 1)` and `(1, 0)` denote the same
/// edge and produce a single symmetric entry. Self-loops and out-of-range
/// endpoints are rejected.
pub fn build_graph(
    edges: &[(usize, usize)],
    features: DenseMatrix,
    labels: Option<Vec<usize>>,
    domain: DomainTag,
) -> Result<Graph> {
    let n = features.rows();
    if let Some(labels) = &labels {
        if labels.len() != n {
            return Err(Error::Validation(format!(
                "{} labels for {} nodes",
                labels.len(),
                n
            )));
        }
    }
    let mut pairs = std::collections::BTreeSet::new();
    for &(a, b) in edges {
        if a >= n || b >= n {
            return Err(Error::Validation(format!(
                "edge ({}, {}) outside node range [0, {})",
                a, b, n
            )));
        }
        if a == b {
            return Err(Error::Validation(format!("self-loop at node {}", a)));
        }
        pairs.insert((a.min(b), a.max(b)));
    }
    let mut triplets = Vec::with_capacity(pairs.len() * 2);
    for (a, b) in pairs {
        triplets.push((a, b, 1.0));
        triplets.push((b, a, 1.0));
    }
    let adjacency = SparseMatrix::from_triplets(n, n, triplets)?;
    Ok(Graph {
        node_count: n,
        adjacency,
        features,
        labels,
        label_mask: None,
        domain,
    })
}

/// A cross-domain edge accepted into the combined graph. Global indexing:
/// source nodes keep their ids, target node `i` becomes `offset + i`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InsertedEdge {
    pub source_global: usize,
    pub target_global: usize,
    pub weight: f64,
}

/// Source and target graphs glued into one node set with a mutable
/// cross-domain edge block.
#[derive(Debug, Clone)]
pub struct CombinedGraph {
    source: Graph,
    target: Graph,
    offset: usize,
    inserted_edges: Vec<InsertedEdge>,
    combined_adjacency: SparseMatrix,
    features: DenseMatrix,
}

impl CombinedGraph {
    pub fn source(&self) -> &Graph {
        &self.source
    }

    pub fn target(&self) -> &Graph {
        &self.target
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn node_count(&self) -> usize {
        self.source.node_count() + self.target.node_count()
    }

    pub fn inserted_edges(&self) -> &[InsertedEdge] {
        &self.inserted_edges
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.combined_adjacency
    }

    /// Concatenated feature matrix, source rows first.
    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn is_source_global(&self, id: usize) -> bool {
        id < self.offset
    }

    /// Replace (or, with `accumulate`, extend) the cross-domain edge set and
    /// rebuild the combined adjacency. Every accepted decision must carry a
    /// weight above `threshold` and join one source and one target node.
    pub fn apply_insertions(
        &mut self,
        accepted: &[InsertionDecision],
        threshold: f64,
        accumulate: bool,
    ) -> Result<()> {
        let mut next: Vec<InsertedEdge> = if accumulate {
            self.inserted_edges.clone()
        } else {
            Vec::new()
        };
        for d in accepted {
            if d.weight <= threshold {
                return Err(Error::Validation(format!(
                    "inserted weight {} not above threshold {}",
                    d.weight, threshold
                )));
            }
            if !self.is_source_global(d.source_node)
                || self.is_source_global(d.target_node)
                || d.target_node >= self.node_count()
            {
                return Err(Error::Validation(format!(
                    "insertion ({}, {}) does not join source and target domains",
                    d.source_node, d.target_node
                )));
            }
            match next
                .iter_mut()
                .find(|e| e.source_global == d.source_node && e.target_global == d.target_node)
            {
                // Re-accepted pair under accumulation: fresh score wins.
                Some(existing) => existing.weight = d.weight,
                None => next.push(InsertedEdge {
                    source_global: d.source_node,
                    target_global: d.target_node,
                    weight: d.weight,
                }),
            }
        }
        self.combined_adjacency = build_combined_adjacency(&self.source, &self.target, &next)?;
        self.inserted_edges = next;
        Ok(())
    }
}

/// Glue two graphs into a block-diagonal combined graph with no cross edges.
pub fn combine(source: Graph, target: Graph) -> Result<CombinedGraph> {
    if source.feature_dim() != target.feature_dim() {
        return Err(Error::Validation(format!(
            "feature dimension mismatch: source {} vs target {}",
            source.feature_dim(),
            target.feature_dim()
        )));
    }
    let mut values =
        Vec::with_capacity((source.node_count() + target.node_count()) * source.feature_dim());
    values.extend_from_slice(source.features().values());
    values.extend_from_slice(target.features().values());
    let features = DenseMatrix::from_vec(
        source.node_count() + target.node_count(),
        source.feature_dim(),
        values,
    )?;
    let combined_adjacency = build_combined_adjacency(&source, &target, &[])?;
    Ok(CombinedGraph {
        offset: source.node_count(),
        source,
        target,
        inserted_edges: Vec::new(),
        combined_adjacency,
        features,
    })
}

fn build_combined_adjacency(
    source: &Graph,
    target: &Graph,
    inserted: &[InsertedEdge],
) -> Result<SparseMatrix> {
    let offset = source.node_count();
    let n = offset + target.node_count();
    let mut triplets = Vec::with_capacity(
        source.adjacency().nnz() + target.adjacency().nnz() + inserted.len() * 2,
    );
    triplets.extend(source.adjacency().iter_entries());
    triplets.extend(
        target
            .adjacency()
            .iter_entries()
            .map(|(r, c, w)| (r + offset, c + offset, w)),
    );
    for e in inserted {
        triplets.push((e.source_global, e.target_global, e.weight));
        triplets.push((e.target_global, e.source_global, e.weight));
    }
    SparseMatrix::from_triplets(n, n, triplets)
}

/// Symmetric GCN normalization: `D^{-1/2} (A + I) D^{-1/2}` where `D` is the
/// weighted degree of `A + I`. Self-loops are added here, never stored on
/// graphs.
pub fn symmetric_normalize(adj: &SparseMatrix) -> Result<SparseMatrix> {
    if adj.rows() != adj.cols() {
        return Err(Error::Validation(format!(
            "normalize: {}x{} matrix not square",
            adj.rows(),
            adj.cols()
        )));
    }
    if !adj.is_symmetric() {
        return Err(Error::Validation("normalize: matrix not symmetric".into()));
    }
    let n = adj.rows();
    let mut degrees = adj.row_sums();
    for d in &mut degrees {
        *d += 1.0;
    }
    let inv_sqrt: Vec<f64> = degrees.iter().map(|&d| 1.0 / d.sqrt()).collect();
    let mut triplets = Vec::with_capacity(adj.nnz() + n);
    for r in 0..n {
        triplets.push((r, r, inv_sqrt[r] * inv_sqrt[r]));
        let (cols, weights) = adj.row_entries(r);
        for (&c, &w) in cols.iter().zip(weights) {
            // Parenthesized so (r, c) and (c, r) round identically.
            triplets.push((r, c, w * (inv_sqrt[r] * inv_sqrt[c])));
        }
    }
    SparseMatrix::from_triplets(n, n, triplets)
}
