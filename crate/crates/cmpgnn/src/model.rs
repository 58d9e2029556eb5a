//! The three learnable components and their forward passes: a shared
//! two-layer GCN encoder, a two-layer MLP link predictor, and a one-layer
//! softmax classifier.
//!
//! Forward passes are expressed on a [`Tape`] so the total objective can be
//! backpropagated through all three components jointly. The same encoder
//! weights are used for the source, target, and combined graphs.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numkernel::{stable_sigmoid, DenseMatrix, SparseMatrix, Tape, Var};

/// Layer sizes. The encoder is `input x hidden x embed` (128 and 64 by
/// default); the predictor maps `embed -> embed -> embed`; the classifier
/// maps `embed -> classes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub input: usize,
    pub hidden: usize,
    pub embed: usize,
    pub classes: usize,
}

impl ModelDims {
    pub fn new(input: usize, classes: usize) -> Self {
        ModelDims {
            input,
            hidden: 128,
            embed: 64,
            classes,
        }
    }
}

pub const PARAM_NAMES: [&str; 6] = [
    "encoder.w1",
    "encoder.w2",
    "predictor.p1",
    "predictor.p2",
    "classifier.weight",
    "classifier.bias",
];

/// All trainable weights. Encoder layers carry no bias; the classifier does.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub w1: DenseMatrix,
    pub w2: DenseMatrix,
    pub p1: DenseMatrix,
    pub p2: DenseMatrix,
    pub wc: DenseMatrix,
    pub bias: DenseMatrix,
}

impl ModelParams {
    /// Glorot-uniform initialization: entries uniform in
    /// `[-sqrt(6 / (fan_in + fan_out)), +sqrt(6 / (fan_in + fan_out))]`.
    pub fn init(dims: ModelDims, rng: &mut impl Rng) -> Self {
        let glorot = |rng: &mut dyn rand::RngCore, fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            DenseMatrix::from_vec(
                fan_in,
                fan_out,
                (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect(),
            )
            .expect("finite init")
        };
        ModelParams {
            w1: glorot(rng, dims.input, dims.hidden),
            w2: glorot(rng, dims.hidden, dims.embed),
            p1: glorot(rng, dims.embed, dims.embed),
            p2: glorot(rng, dims.embed, dims.embed),
            wc: glorot(rng, dims.embed, dims.classes),
            bias: DenseMatrix::zeros(1, dims.classes),
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            input: self.w1.rows(),
            hidden: self.w1.cols(),
            embed: self.w2.cols(),
            classes: self.wc.cols(),
        }
    }

    pub fn matrices(&self) -> [&DenseMatrix; 6] {
        [&self.w1, &self.w2, &self.p1, &self.p2, &self.wc, &self.bias]
    }

    pub fn matrices_mut(&mut self) -> [&mut DenseMatrix; 6] {
        [
            &mut self.w1,
            &mut self.w2,
            &mut self.p1,
            &mut self.p2,
            &mut self.wc,
            &mut self.bias,
        ]
    }

    pub fn to_vec(&self) -> Vec<DenseMatrix> {
        self.matrices().into_iter().cloned().collect()
    }

    pub fn from_slice(mats: &[DenseMatrix]) -> Result<Self> {
        if mats.len() != 6 {
            return Err(Error::Dimension(format!(
                "expected 6 parameter matrices, got {}",
                mats.len()
            )));
        }
        Ok(ModelParams {
            w1: mats[0].clone(),
            w2: mats[1].clone(),
            p1: mats[2].clone(),
            p2: mats[3].clone(),
            wc: mats[4].clone(),
            bias: mats[5].clone(),
        })
    }
}

/// Parameter handles registered on a tape for one forward/backward pass.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub w1: Var,
    pub w2: Var,
    pub p1: Var,
    pub p2: Var,
    pub wc: Var,
    pub bias: Var,
}

impl ParamVars {
    pub fn register(tape: &mut Tape, params: &ModelParams) -> Self {
        ParamVars {
            w1: tape.input(params.w1.clone()),
            w2: tape.input(params.w2.clone()),
            p1: tape.input(params.p1.clone()),
            p2: tape.input(params.p2.clone()),
            wc: tape.input(params.wc.clone()),
            bias: tape.input(params.bias.clone()),
        }
    }

    pub fn vars(&self) -> [Var; 6] {
        [self.w1, self.w2, self.p1, self.p2, self.wc, self.bias]
    }
}

/// Embedding snapshots of one epoch's forward passes. Rows
/// `[offset, offset + N_T)` of `h_c` are the combined-graph embeddings of
/// target nodes. `z_c` is absent for variants that skip the link predictor.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    pub h_s: DenseMatrix,
    pub h_t: DenseMatrix,
    pub h_c: DenseMatrix,
    pub z_c: Option<DenseMatrix>,
}

/// Two propagation layers with a relu between them and none after:
/// `H = A_hat . relu(A_hat . X . W1) . W2`.
pub fn encoder_forward(
    tape: &mut Tape,
    params: &ParamVars,
    normalized_adj: &Arc<SparseMatrix>,
    features: Var,
) -> Result<Var> {
    let xw = tape.matmul(features, params.w1)?;
    let prop1 = tape.spmm(normalized_adj, xw)?;
    let act = tape.relu(prop1);
    let hw = tape.matmul(act, params.w2)?;
    tape.spmm(normalized_adj, hw)
}

/// Link-predictor embedding: `Z = relu(H . P1) . P2`.
pub fn predictor_embed(tape: &mut Tape, params: &ParamVars, h_c: Var) -> Result<Var> {
    let hp = tape.matmul(h_c, params.p1)?;
    let act = tape.relu(hp);
    tape.matmul(act, params.p2)
}

/// Edge probability for a node pair: `sigmoid(z_i . z_j)`. Symmetric in its
/// arguments; used outside the tape for per-epoch candidate scoring.
pub fn edge_score(z_i: &[f64], z_j: &[f64]) -> f64 {
    debug_assert_eq!(z_i.len(), z_j.len());
    stable_sigmoid(crate::numkernel::dense::dot(z_i, z_j))
}

/// Row-wise class probabilities: `softmax(H . Wc + bias)`.
pub fn classify(tape: &mut Tape, params: &ParamVars, h: Var) -> Result<Var> {
    let logits = tape.matmul(h, params.wc)?;
    let shifted = tape.add_row_broadcast(logits, params.bias)?;
    Ok(tape.row_softmax(shifted))
}

/// Plain (non-tape) encoder forward, for pre-trained embeddings and
/// evaluation-only passes.
pub fn encoder_forward_plain(
    params: &ModelParams,
    normalized_adj: &SparseMatrix,
    features: &DenseMatrix,
) -> Result<DenseMatrix> {
    let xw = crate::numkernel::dense_matmul(features, &params.w1)?;
    let prop1 = crate::numkernel::spmm(normalized_adj, &xw)?;
    let act = prop1.map(|v| if v > 0.0 { v } else { 0.0 });
    let hw = crate::numkernel::dense_matmul(&act, &params.w2)?;
    crate::numkernel::spmm(normalized_adj, &hw)
}

/// Plain (non-tape) classifier, for evaluation-only passes.
pub fn classify_plain(params: &ModelParams, h: &DenseMatrix) -> Result<DenseMatrix> {
    let mut logits = crate::numkernel::dense_matmul(h, &params.wc)?;
    for r in 0..logits.rows() {
        for (v, &b) in logits.row_mut(r).iter_mut().zip(params.bias.row(0)) {
            *v += b;
        }
    }
    let mut probs = logits;
    for r in 0..probs.rows() {
        let row = probs.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(probs)
}

/// Argmax class per row.
pub fn predicted_classes(probs: &DenseMatrix) -> Vec<usize> {
    (0..probs.rows())
        .map(|r| {
            probs
                .row(r)
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(c, _)| c)
                .unwrap_or(0)
        })
        .collect()
}
