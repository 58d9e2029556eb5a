//! Evaluation and analysis quantities. All metrics are pure functions of
//! embeddings, labels, and the inserted-edge log; none feed back into
//! training (target labels are evaluation-only).

use crate::error::{Error, Result};
use crate::graphstore::InsertedEdge;
use crate::losses::LossBundle;
use crate::numkernel::{dense::dot, DenseMatrix};

/// Per-epoch record streamed to `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub target_accuracy: Option<f64>,
    pub target_auroc: Option<f64>,
    pub loss: LossBundle,
    pub inserted_edge_count: usize,
    pub inserted_edges_per_node: f64,
    pub intra_class_edge_ratio: Option<f64>,
    /// Per-class source/target embedding-center distance; `None` marks a
    /// class absent on one side.
    pub center_distance: Vec<Option<f64>>,
    /// Cosine between the mean source and mean target embeddings.
    pub domain_similarity: Option<f64>,
    /// Mean cosine over inserted-edge endpoint pairs in the combined view.
    pub inserted_pair_similarity: Option<f64>,
    /// Link-predictor evaluations spent this epoch (at most `K * N_T`).
    pub predictor_evals: u64,
}

/// Fraction of exact matches between predicted and true classes.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != truth.len() {
        return Err(Error::Validation(format!(
            "accuracy over {} predictions and {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let hits = predicted
        .iter()
        .zip(truth)
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Probability that a random positive outranks a random negative, computed
/// from the rank statistic; tied scores count one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Validation(
            "auroc needs both classes present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Average ranks across tie groups (1-based ranks).
    let mut rank = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            rank[idx] = avg;
        }
        i = j + 1;
    }
    let rank_sum: f64 = labels
        .iter()
        .zip(&rank)
        .filter(|(&l, _)| l)
        .map(|(_, &r)| r)
        .sum();
    let u = rank_sum - (positives * (positives + 1)) as f64 / 2.0;
    Ok(u / (positives as f64 * negatives as f64))
}

/// Per-class distance between source and target embedding centers:
/// `||mean(H_T | class c) - mean(H_S | class c)||_2`. A class missing on
/// either side reports `None`. The target side typically conditions on
/// predicted labels.
pub fn center_distance(
    h_s: &DenseMatrix,
    labels_s: &[usize],
    h_t: &DenseMatrix,
    labels_t: &[usize],
    num_classes: usize,
) -> Result<Vec<Option<f64>>> {
    if labels_s.len() != h_s.rows() || labels_t.len() != h_t.rows() {
        return Err(Error::Dimension(format!(
            "labels {}/{} vs embedding rows {}/{}",
            labels_s.len(),
            labels_t.len(),
            h_s.rows(),
            h_t.rows()
        )));
    }
    if h_s.cols() != h_t.cols() {
        return Err(Error::Dimension(format!(
            "embedding widths differ: {} vs {}",
            h_s.cols(),
            h_t.cols()
        )));
    }
    let class_mean = |h: &DenseMatrix, labels: &[usize], c: usize| -> Option<Vec<f64>> {
        let mut sum = vec![0.0; h.cols()];
        let mut n = 0usize;
        for (i, &l) in labels.iter().enumerate() {
            if l == c {
                for (s, &v) in sum.iter_mut().zip(h.row(i)) {
                    *s += v;
                }
                n += 1;
            }
        }
        (n > 0).then(|| {
            sum.iter_mut().for_each(|s| *s /= n as f64);
            sum
        })
    };
    Ok((0..num_classes)
        .map(|c| {
            let ms = class_mean(h_s, labels_s, c)?;
            let mt = class_mean(h_t, labels_t, c)?;
            Some(
                ms.iter()
                    .zip(&mt)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
            )
        })
        .collect())
}

/// Fraction of inserted cross-domain edges joining same-class endpoints, or
/// `None` when no edges were inserted. Analysis-only: needs target truth.
pub fn intra_class_edge_ratio(
    inserted: &[InsertedEdge],
    source_labels: &[usize],
    target_labels: &[usize],
    offset: usize,
) -> Option<f64> {
    if inserted.is_empty() {
        return None;
    }
    let same = inserted
        .iter()
        .filter(|e| source_labels[e.source_global] == target_labels[e.target_global - offset])
        .count();
    Some(same as f64 / inserted.len() as f64)
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some(dot(a, b) / (na * nb))
    }
}

fn mean_row(h: &DenseMatrix) -> Vec<f64> {
    let mut sum = vec![0.0; h.cols()];
    for r in 0..h.rows() {
        for (s, &v) in sum.iter_mut().zip(h.row(r)) {
            *s += v;
        }
    }
    sum.iter_mut().for_each(|s| *s /= h.rows().max(1) as f64);
    sum
}

/// Domain-level and inserted-pair embedding similarity: the cosine between
/// the two domain centroids, and the mean cosine over inserted-edge endpoint
/// pairs in the combined embedding. Undefined quantities report `None`.
pub fn domain_similarity(
    h_s: &DenseMatrix,
    h_t: &DenseMatrix,
    inserted: &[InsertedEdge],
    h_c: &DenseMatrix,
) -> (Option<f64>, Option<f64>) {
    let domain = cosine(&mean_row(h_s), &mean_row(h_t));
    let mut pair_sum = 0.0;
    let mut pairs = 0usize;
    for e in inserted {
        if let Some(c) = cosine(h_c.row(e.source_global), h_c.row(e.target_global)) {
            pair_sum += c;
            pairs += 1;
        }
    }
    let pair = (pairs > 0).then(|| pair_sum / pairs as f64);
    (domain, pair)
}
