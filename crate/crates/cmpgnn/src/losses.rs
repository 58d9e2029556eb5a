//! The four loss terms and the combined training objective.
//!
//! All losses are built from tape ops so one backward pass differentiates
//! the total objective with respect to every encoder, predictor, and
//! classifier parameter jointly.

use crate::error::{Error, Result};
use crate::numkernel::{DenseMatrix, Tape, Var};

/// The four loss scalars, their weights, and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossBundle {
    pub l_clf: f64,
    pub l_entropy: f64,
    pub l_ra: f64,
    pub l_mi: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub total: f64,
}

impl LossBundle {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
            && self.l_clf.is_finite()
            && self.l_entropy.is_finite()
            && self.l_ra.is_finite()
            && self.l_mi.is_finite()
    }
}

/// A zero-valued constant scalar, used for loss terms an ablation skips.
pub fn zero_loss(tape: &mut Tape) -> Var {
    tape.input(DenseMatrix::zeros(1, 1))
}

/// Supervised cross-entropy over the masked (labeled) rows of a probability
/// matrix: `-(1/N) sum_i log probs[i, labels[i]]`. Returns the loss var and
/// the number of probabilities clamped at the floor.
pub fn loss_clf(
    tape: &mut Tape,
    probs: Var,
    labels: &[usize],
    mask: &[bool],
) -> Result<(Var, usize)> {
    let shape = tape.value(probs).shape();
    if labels.len() != shape.0 || mask.len() != shape.0 {
        return Err(Error::Dimension(format!(
            "{} rows of probabilities, {} labels, {} mask entries",
            shape.0,
            labels.len(),
            mask.len()
        )));
    }
    let picks: Vec<(usize, usize)> = labels
        .iter()
        .zip(mask)
        .enumerate()
        .filter(|(_, (_, &m))| m)
        .map(|(i, (&y, _))| (i, y))
        .collect();
    if picks.is_empty() {
        return Err(Error::Validation(
            "classification loss over an empty label mask".into(),
        ));
    }
    if let Some(&(i, y)) = picks.iter().find(|&&(_, y)| y >= shape.1) {
        return Err(Error::Validation(format!(
            "label {} at node {} outside {} classes",
            y, i, shape.1
        )));
    }
    tape.picked_neg_log_mean(probs, picks)
}

/// Prediction-entropy loss over target-node probabilities (rows are the
/// target nodes as embedded on the combined graph):
/// `-(1/N_T) sum_i sum_c p log p`, with `0 log 0 = 0`.
pub fn loss_entropy(tape: &mut Tape, probs: Var) -> Var {
    tape.entropy_mean(probs)
}

/// Edge-reconstruction batch: per anchor node, its positive neighbors and
/// the sampled negatives for each positive.
#[derive(Debug, Clone, Default)]
pub struct RaGroup {
    pub anchor: usize,
    pub positives: Vec<usize>,
    /// `negatives[p]` are the sampled non-neighbors for `positives[p]`.
    pub negatives: Vec<Vec<usize>>,
}

/// Flattened pair lists and the per-pair weights realizing the nested means
/// of the reconstruction loss: nodes weighted uniformly, each node's
/// positives by `1/|N(i)|`, each positive's negatives by a further `1/m`.
#[derive(Debug, Clone)]
pub struct RaPairs {
    pub pos_pairs: Vec<(usize, usize)>,
    pub neg_pairs: Vec<(usize, usize)>,
    pub pos_weights: Vec<f64>,
    pub neg_weights: Vec<f64>,
}

impl RaPairs {
    /// Nodes without positives are excluded from the outer mean.
    pub fn from_groups(groups: &[RaGroup]) -> Result<Self> {
        let active = groups.iter().filter(|g| !g.positives.is_empty()).count();
        let mut pairs = RaPairs {
            pos_pairs: Vec::new(),
            neg_pairs: Vec::new(),
            pos_weights: Vec::new(),
            neg_weights: Vec::new(),
        };
        for g in groups {
            if g.positives.is_empty() {
                continue;
            }
            if g.negatives.len() != g.positives.len() {
                return Err(Error::Dimension(format!(
                    "anchor {}: {} positives but {} negative lists",
                    g.anchor,
                    g.positives.len(),
                    g.negatives.len()
                )));
            }
            let node_w = 1.0 / (active as f64 * g.positives.len() as f64);
            for (&j, negs) in g.positives.iter().zip(&g.negatives) {
                pairs.pos_pairs.push((g.anchor, j));
                pairs.pos_weights.push(node_w);
                for &k in negs {
                    pairs.neg_pairs.push((g.anchor, k));
                    pairs.neg_weights.push(node_w / negs.len() as f64);
                }
            }
        }
        Ok(pairs)
    }
}

/// Reconstruction loss from already-computed edge probabilities:
/// weighted sum of `(s - 1)^2` over positives plus `s^2` over negatives.
pub fn loss_ra_from_scores(
    tape: &mut Tape,
    pos_scores: Var,
    neg_scores: Var,
    pos_weights: Vec<f64>,
    neg_weights: Vec<f64>,
) -> Result<Var> {
    let shifted = tape.add_scalar(pos_scores, -1.0);
    let pos_sq = tape.elem_mul(shifted, shifted)?;
    let pos_term = tape.weighted_sum(pos_sq, pos_weights)?;
    let neg_sq = tape.elem_mul(neg_scores, neg_scores)?;
    let neg_term = tape.weighted_sum(neg_sq, neg_weights)?;
    tape.add(pos_term, neg_term)
}

/// Reconstruction loss over link-predictor embeddings: scores each
/// positive/negative pair as `sigmoid(z_i . z_j)` and applies
/// [`loss_ra_from_scores`]. Anchors with no neighbors contribute nothing.
pub fn loss_ra(tape: &mut Tape, z: Var, groups: &[RaGroup]) -> Result<Var> {
    let pairs = RaPairs::from_groups(groups)?;
    if pairs.pos_pairs.is_empty() {
        return Ok(zero_loss(tape));
    }
    let n_pos = pairs.pos_pairs.len();
    let n_neg = pairs.neg_pairs.len();
    let pos_dots = tape.pair_dots(z, z, pairs.pos_pairs, n_pos, 1)?;
    let pos_scores = tape.sigmoid(pos_dots);
    let neg_dots = tape.pair_dots(z, z, pairs.neg_pairs, n_neg, 1)?;
    let neg_scores = tape.sigmoid(neg_dots);
    loss_ra_from_scores(tape, pos_scores, neg_scores, pairs.pos_weights, pairs.neg_weights)
}

/// Contrastive mutual-information loss between each target node's
/// combined-graph and target-graph embeddings. Row `offset + i` of `h_c`
/// pairs with row `i` of `h_t`; `negatives[i]` are target-local ids of the
/// sampled non-self nodes (all lists the same length).
pub fn loss_mi(
    tape: &mut Tape,
    h_c: Var,
    h_t: Var,
    offset: usize,
    negatives: &[Vec<usize>],
    tau: f64,
) -> Result<Var> {
    let n_t = tape.value(h_t).rows();
    if negatives.len() != n_t {
        return Err(Error::Dimension(format!(
            "{} negative lists for {} target nodes",
            negatives.len(),
            n_t
        )));
    }
    let m = negatives.first().map_or(0, |l| l.len());
    if m == 0 || negatives.iter().any(|l| l.len() != m) {
        return Err(Error::Validation(
            "every target node needs the same nonzero negative count".into(),
        ));
    }
    let pos_pairs: Vec<(usize, usize)> = (0..n_t).map(|i| (offset + i, i)).collect();
    let neg_pairs: Vec<(usize, usize)> = negatives
        .iter()
        .enumerate()
        .flat_map(|(i, negs)| negs.iter().map(move |&k| (offset + i, k)))
        .collect();
    let pos = tape.pair_dots(h_c, h_t, pos_pairs, n_t, 1)?;
    let negs = tape.pair_dots(h_c, h_t, neg_pairs, n_t, m)?;
    tape.info_nce_mean(pos, negs, tau)
}

/// Weighted total per the four-part objective:
/// `total = l_clf + lambda1 * l_entropy + lambda2 * l_ra + lambda3 * l_mi`.
pub fn total_objective(
    tape: &mut Tape,
    l_clf: Var,
    l_entropy: Var,
    l_ra: Var,
    l_mi: Var,
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
) -> Result<(Var, LossBundle)> {
    for (name, l) in [("lambda1", lambda1), ("lambda2", lambda2), ("lambda3", lambda3)] {
        if !(l >= 0.0) {
            return Err(Error::Validation(format!("{} = {} must be >= 0", name, l)));
        }
    }
    let scaled_entropy = tape.scale(l_entropy, lambda1);
    let scaled_ra = tape.scale(l_ra, lambda2);
    let scaled_mi = tape.scale(l_mi, lambda3);
    let partial = tape.add(l_clf, scaled_entropy)?;
    let partial = tape.add(partial, scaled_ra)?;
    let total = tape.add(partial, scaled_mi)?;
    let bundle = LossBundle {
        l_clf: tape.scalar(l_clf),
        l_entropy: tape.scalar(l_entropy),
        l_ra: tape.scalar(l_ra),
        l_mi: tape.scalar(l_mi),
        lambda1,
        lambda2,
        lambda3,
        total: tape.scalar(total),
    };
    Ok((total, bundle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat(rows: usize, cols: usize, values: &[f64]) -> DenseMatrix {
        DenseMatrix::from_vec(rows, cols, values.to_vec()).unwrap()
    }

    #[test]
    fn clf_perfect_predictions_give_zero() {
        let mut tape = Tape::new();
        let probs = tape.input(mat(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let (l, clamped) = loss_clf(&mut tape, probs, &[0, 1], &[true, true]).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
        assert_eq!(clamped, 0);
    }

    #[test]
    fn clf_uniform_two_class_is_ln_two() {
        let mut tape = Tape::new();
        let probs = tape.input(mat(3, 2, &[0.5; 6]));
        let (l, _) = loss_clf(&mut tape, probs, &[0, 1, 0], &[true; 3]).unwrap();
        assert!((tape.scalar(l) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn clf_matches_scalar_arithmetic_oracle() {
        // probs [0.8, 0.2] label 0 and [0.4, 0.6] label 1.
        let mut tape = Tape::new();
        let probs = tape.input(mat(2, 2, &[0.8, 0.2, 0.4, 0.6]));
        let (l, _) = loss_clf(&mut tape, probs, &[0, 1], &[true, true]).unwrap();
        let oracle = -(0.8f64.ln() + 0.6f64.ln()) / 2.0;
        assert!((tape.scalar(l) - oracle).abs() < 1e-15);
        assert!((tape.scalar(l) - 0.3670).abs() < 1e-4);
    }

    #[test]
    fn clf_respects_mask_and_rejects_empty() {
        let mut tape = Tape::new();
        let probs = tape.input(mat(2, 2, &[0.8, 0.2, 0.4, 0.6]));
        let (l, _) = loss_clf(&mut tape, probs, &[0, 1], &[true, false]).unwrap();
        assert!((tape.scalar(l) + 0.8f64.ln()).abs() < 1e-15);
        assert!(matches!(
            loss_clf(&mut tape, probs, &[0, 1], &[false, false]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn entropy_one_hot_zero_uniform_ln_c() {
        let mut tape = Tape::new();
        let one_hot = tape.input(mat(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let l0 = loss_entropy(&mut tape, one_hot);
        assert_eq!(tape.scalar(l0), 0.0);
        let uniform = tape.input(mat(4, 2, &[0.5; 8]));
        let l = loss_entropy(&mut tape, uniform);
        assert!((tape.scalar(l) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_matches_scalar_arithmetic_oracle() {
        let mut tape = Tape::new();
        let probs = tape.input(mat(1, 2, &[0.9, 0.1]));
        let l = loss_entropy(&mut tape, probs);
        let oracle = -(0.9 * 0.9f64.ln() + 0.1 * 0.1f64.ln());
        assert!((tape.scalar(l) - oracle).abs() < 1e-15);
        assert!((tape.scalar(l) - 0.3251).abs() < 1e-4);
    }

    #[test]
    fn ra_perfect_scores_give_zero() {
        let mut tape = Tape::new();
        let pos = tape.input(mat(2, 1, &[1.0, 1.0]));
        let neg = tape.input(mat(2, 1, &[0.0, 0.0]));
        let l = loss_ra_from_scores(&mut tape, pos, neg, vec![0.5; 2], vec![0.5; 2]).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
    }

    #[test]
    fn ra_all_half_scores_give_half() {
        // (0.5 - 1)^2 + 0.5^2 = 0.5 for every pair.
        let mut tape = Tape::new();
        let pos = tape.input(mat(3, 1, &[0.5; 3]));
        let neg = tape.input(mat(3, 1, &[0.5; 3]));
        let w = vec![1.0 / 3.0; 3];
        let l = loss_ra_from_scores(&mut tape, pos, neg, w.clone(), w).unwrap();
        assert!((tape.scalar(l) - 0.5).abs() < 1e-15);
    }

    /// Brute-force double loop over the loss definition, independent of the
    /// tape path: mean over anchors of
    /// `(1/|N|) sum_j [(s_ij - 1)^2 + mean_k s_ik^2]`.
    fn ra_brute_force(z: &DenseMatrix, groups: &[RaGroup]) -> f64 {
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let score = |a: usize, b: usize| {
            let mut d = 0.0;
            for c in 0..z.cols() {
                d += z.get(a, c) * z.get(b, c);
            }
            sig(d)
        };
        let mut total = 0.0;
        let mut active = 0usize;
        for g in groups {
            if g.positives.is_empty() {
                continue;
            }
            active += 1;
            let mut node_term = 0.0;
            for (p, &j) in g.positives.iter().enumerate() {
                let s = score(g.anchor, j);
                let mut term = (s - 1.0) * (s - 1.0);
                let negs = &g.negatives[p];
                let mut neg_mean = 0.0;
                for &k in negs {
                    let sk = score(g.anchor, k);
                    neg_mean += sk * sk;
                }
                term += neg_mean / negs.len() as f64;
                node_term += term;
            }
            total += node_term / g.positives.len() as f64;
        }
        if active == 0 {
            0.0
        } else {
            total / active as f64
        }
    }

    #[test]
    fn ra_matches_brute_force_on_random_fixtures() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(3..=10);
            let d = rng.gen_range(1..5);
            let z_data: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let z_mat = mat(n, d, &z_data);
            let groups: Vec<RaGroup> = (0..n)
                .map(|anchor| {
                    let deg = rng.gen_range(0..3.min(n));
                    let positives: Vec<usize> =
                        (0..deg).map(|_| rng.gen_range(0..n)).collect();
                    let negatives = positives
                        .iter()
                        .map(|_| {
                            (0..rng.gen_range(1..4)).map(|_| rng.gen_range(0..n)).collect()
                        })
                        .collect();
                    RaGroup {
                        anchor,
                        positives,
                        negatives,
                    }
                })
                .collect();

            let mut tape = Tape::new();
            let z = tape.input(z_mat.clone());
            let l = loss_ra(&mut tape, z, &groups).unwrap();
            let oracle = ra_brute_force(&z_mat, &groups);
            assert!(
                (tape.scalar(l) - oracle).abs() < 1e-12,
                "seed {}: {} vs {}",
                seed,
                tape.scalar(l),
                oracle
            );
        }
    }

    #[test]
    fn ra_isolated_anchors_are_excluded() {
        let mut tape = Tape::new();
        let z = tape.input(mat(3, 2, &[0.5, 0.1, -0.2, 0.3, 0.9, -0.8]));
        let groups = vec![
            RaGroup {
                anchor: 0,
                positives: vec![1],
                negatives: vec![vec![2]],
            },
            RaGroup::default(),
        ];
        let with_isolated = loss_ra(&mut tape, z, &groups).unwrap();
        let without = loss_ra(&mut tape, z, &groups[..1]).unwrap();
        assert_eq!(tape.scalar(with_isolated), tape.scalar(without));
    }

    /// Independent naive reimplementation of the contrastive loss.
    fn mi_brute_force(
        h_c: &DenseMatrix,
        h_t: &DenseMatrix,
        offset: usize,
        negatives: &[Vec<usize>],
        tau: f64,
    ) -> f64 {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let n = h_t.rows();
        let mut total = 0.0;
        for i in 0..n {
            let pos = (dot(h_c.row(offset + i), h_t.row(i)) / tau).exp();
            let mut neg = 0.0;
            for &k in &negatives[i] {
                neg += (dot(h_c.row(offset + i), h_t.row(k)) / tau).exp();
            }
            neg /= negatives[i].len() as f64;
            total -= (pos / (pos + neg)).ln();
        }
        total / n as f64
    }

    #[test]
    fn mi_matches_brute_force_on_random_fixtures() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let n_t = rng.gen_range(2..=8);
            let offset = rng.gen_range(0..4);
            let d = rng.gen_range(1..5);
            let hc = mat(
                offset + n_t,
                d,
                &(0..(offset + n_t) * d)
                    .map(|_| rng.gen_range(-1.5..1.5))
                    .collect::<Vec<_>>(),
            );
            let ht = mat(
                n_t,
                d,
                &(0..n_t * d).map(|_| rng.gen_range(-1.5..1.5)).collect::<Vec<_>>(),
            );
            let m = rng.gen_range(1..4);
            let negatives: Vec<Vec<usize>> = (0..n_t)
                .map(|i| {
                    (0..m)
                        .map(|_| {
                            let mut k = rng.gen_range(0..n_t);
                            while k == i && n_t > 1 {
                                k = rng.gen_range(0..n_t);
                            }
                            k
                        })
                        .collect()
                })
                .collect();
            let tau = rng.gen_range(0.2..1.0);

            let mut tape = Tape::new();
            let hc_v = tape.input(hc.clone());
            let ht_v = tape.input(ht.clone());
            let l = loss_mi(&mut tape, hc_v, ht_v, offset, &negatives, tau).unwrap();
            let oracle = mi_brute_force(&hc, &ht, offset, &negatives, tau);
            assert!(
                (tape.scalar(l) - oracle).abs() < 1e-12,
                "seed {}: {} vs {}",
                seed,
                tape.scalar(l),
                oracle
            );
        }
    }

    #[test]
    fn total_objective_weighting() {
        let build = |vals: [f64; 4]| {
            let mut tape = Tape::new();
            let vars: Vec<Var> = vals
                .iter()
                .map(|&v| tape.input(mat(1, 1, &[v])))
                .collect();
            (tape, vars)
        };

        // lambda = 0 everywhere: total = l_clf.
        let (mut tape, v) = build([0.7, 9.0, 9.0, 9.0]);
        let (_, bundle) =
            total_objective(&mut tape, v[0], v[1], v[2], v[3], 0.0, 0.0, 0.0).unwrap();
        assert_eq!(bundle.total, 0.7);

        // Unit weights sum the components.
        let (mut tape, v) = build([0.3, 0.2, 0.4, 0.1]);
        let (_, bundle) =
            total_objective(&mut tape, v[0], v[1], v[2], v[3], 1.0, 1.0, 1.0).unwrap();
        assert!((bundle.total - 1.0).abs() < 1e-15);

        // Mixed weights: 0.5 + 0.1*0.2 + 10*0.03 + 1*0.4 = 1.22.
        let (mut tape, v) = build([0.5, 0.2, 0.03, 0.4]);
        let (total, bundle) =
            total_objective(&mut tape, v[0], v[1], v[2], v[3], 0.1, 10.0, 1.0).unwrap();
        assert!((bundle.total - 1.22).abs() < 1e-12);
        // The bundle total is the recorded op result, bitwise.
        assert_eq!(bundle.total.to_bits(), tape.scalar(total).to_bits());

        let (mut tape, v) = build([0.5, 0.2, 0.03, 0.4]);
        assert!(matches!(
            total_objective(&mut tape, v[0], v[1], v[2], v[3], -0.1, 1.0, 1.0),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn losses_are_nonnegative_on_random_inputs() {
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let n = rng.gen_range(2..6);
            let logits: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut tape = Tape::new();
            let lv = tape.input(mat(n, 3, &logits));
            let probs = tape.row_softmax(lv);
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let (clf, _) = loss_clf(&mut tape, probs, &labels, &vec![true; n]).unwrap();
            assert!(tape.scalar(clf) >= 0.0);
            let ent = loss_entropy(&mut tape, probs);
            assert!(tape.scalar(ent) >= 0.0);
        }
    }
}
