//! Matrix-granularity reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every differentiable operation during a forward pass;
//! [`Tape::backward`] replays the record in exact reverse execution order,
//! accumulating vector-Jacobian products. The op set is the closure of what
//! the encoder/predictor/classifier forward passes and the four losses need,
//! not a general autodiff system.
//!
//! Sparse adjacency operands are constants: no gradient flows to edge
//! weights, only to the dense operand of a sparse-dense product.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numkernel::dense::{
    dense_matmul, dense_matmul_a_bt, dense_matmul_at_b, DenseMatrix,
};
use crate::numkernel::sparse::{spmm, spmm_transpose, SparseMatrix};

/// Probability floor for log terms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum TapeOp {
    Matmul { a: usize, b: usize, out: usize },
    Spmm { s: Arc<SparseMatrix>, d: usize, out: usize },
    Add { a: usize, b: usize, out: usize },
    AddRowBroadcast { a: usize, bias: usize, out: usize },
    ScaleConst { a: usize, c: f64, out: usize },
    AddScalarConst { a: usize, out: usize },
    Relu { a: usize, out: usize },
    Sigmoid { a: usize, out: usize },
    RowSoftmax { a: usize, out: usize },
    GatherRows { a: usize, rows: Vec<usize>, out: usize },
    PairDots { a: usize, b: usize, pairs: Vec<(usize, usize)>, out: usize },
    ElemMul { a: usize, b: usize, out: usize },
    WeightedSum { a: usize, weights: Vec<f64>, out: usize },
    PickedNegLogMean { probs: usize, picks: Vec<(usize, usize)>, out: usize },
    EntropyMean { probs: usize, out: usize },
    InfoNceMean { pos: usize, negs: usize, tau: f64, out: usize },
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<DenseMatrix>,
    ops: Vec<TapeOp>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Register a leaf value (parameter or data). Leaves keep their gradient
    /// through [`Gradients`]; intermediate gradients are consumed during the
    /// backward sweep.
    pub fn input(&mut self, m: DenseMatrix) -> Var {
        let idx = self.nodes.len();
        self.nodes.push(m);
        Var(idx)
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0]
    }

    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].shape(), (1, 1));
        self.nodes[v.0].get(0, 0)
    }

    fn push(&mut self, value: DenseMatrix, op: impl FnOnce(usize) -> TapeOp) -> Var {
        let out = self.nodes.len();
        self.nodes.push(value);
        self.ops.push(op(out));
        Var(out)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = dense_matmul(&self.nodes[a.0], &self.nodes[b.0])?;
        Ok(self.push(value, |out| TapeOp::Matmul { a: a.0, b: b.0, out }))
    }

    pub fn spmm(&mut self, s: &Arc<SparseMatrix>, d: Var) -> Result<Var> {
        let value = spmm(s, &self.nodes[d.0])?;
        let s = Arc::clone(s);
        Ok(self.push(value, |out| TapeOp::Spmm { s, d: d.0, out }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ma, mb) = (&self.nodes[a.0], &self.nodes[b.0]);
        if ma.shape() != mb.shape() {
            return Err(Error::Dimension(format!(
                "add: {:?} vs {:?}",
                ma.shape(),
                mb.shape()
            )));
        }
        let mut value = ma.clone();
        value.add_assign(mb)?;
        Ok(self.push(value, |out| TapeOp::Add { a: a.0, b: b.0, out }))
    }

    /// Add a `1 x c` row vector to every row of `a`.
    pub fn add_row_broadcast(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ma, mb) = (&self.nodes[a.0], &self.nodes[bias.0]);
        if mb.rows() != 1 || mb.cols() != ma.cols() {
            return Err(Error::Dimension(format!(
                "add_row_broadcast: {:?} + {:?}",
                ma.shape(),
                mb.shape()
            )));
        }
        let mut value = ma.clone();
        let brow = mb.row(0).to_vec();
        for r in 0..value.rows() {
            for (o, &bv) in value.row_mut(r).iter_mut().zip(&brow) {
                *o += bv;
            }
        }
        Ok(self.push(value, |out| TapeOp::AddRowBroadcast {
            a: a.0,
            bias: bias.0,
            out,
        }))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.nodes[a.0].map(|v| c * v);
        self.push(value, |out| TapeOp::ScaleConst { a: a.0, c, out })
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.nodes[a.0].map(|v| v + c);
        self.push(value, |out| TapeOp::AddScalarConst { a: a.0, out })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(value, |out| TapeOp::Relu { a: a.0, out })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].map(stable_sigmoid);
        self.push(value, |out| TapeOp::Sigmoid { a: a.0, out })
    }

    /// Row-wise softmax with max-shift stabilization.
    pub fn row_softmax(&mut self, a: Var) -> Var {
        let ma = &self.nodes[a.0];
        let mut value = ma.clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
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
        self.push(value, |out| TapeOp::RowSoftmax { a: a.0, out })
    }

    /// `out[p] = a[rows[p]]`; backward scatter-adds into the gathered rows.
    pub fn gather_rows(&mut self, a: Var, rows: Vec<usize>) -> Result<Var> {
        let ma = &self.nodes[a.0];
        if let Some(&bad) = rows.iter().find(|&&r| r >= ma.rows()) {
            return Err(Error::Dimension(format!(
                "gather_rows: row {} outside {} rows",
                bad,
                ma.rows()
            )));
        }
        let cols = ma.cols();
        let mut values = Vec::with_capacity(rows.len() * cols);
        for &r in &rows {
            values.extend_from_slice(ma.row(r));
        }
        let value = DenseMatrix::from_vec(rows.len(), cols, values)?;
        Ok(self.push(value, |out| TapeOp::GatherRows { a: a.0, rows, out }))
    }

    /// Row-pair dot products: entry `p` (row-major over the `out_rows x
    /// out_cols` output) is `a[pairs[p].0] . b[pairs[p].1]`.
    pub fn pair_dots(
        &mut self,
        a: Var,
        b: Var,
        pairs: Vec<(usize, usize)>,
        out_rows: usize,
        out_cols: usize,
    ) -> Result<Var> {
        let (ma, mb) = (&self.nodes[a.0], &self.nodes[b.0]);
        if ma.cols() != mb.cols() {
            return Err(Error::Dimension(format!(
                "pair_dots: {} vs {} columns",
                ma.cols(),
                mb.cols()
            )));
        }
        if pairs.len() != out_rows * out_cols {
            return Err(Error::Dimension(format!(
                "pair_dots: {} pairs for {}x{} output",
                pairs.len(),
                out_rows,
                out_cols
            )));
        }
        if let Some(&(ra, rb)) = pairs.iter().find(|&&(ra, rb)| ra >= ma.rows() || rb >= mb.rows())
        {
            return Err(Error::Dimension(format!(
                "pair_dots: pair ({}, {}) outside {}x{} rows",
                ra,
                rb,
                ma.rows(),
                mb.rows()
            )));
        }
        let values = pairs
            .iter()
            .map(|&(ra, rb)| crate::numkernel::dense::dot(ma.row(ra), mb.row(rb)))
            .collect();
        let value = DenseMatrix::from_vec(out_rows, out_cols, values)?;
        Ok(self.push(value, |out| TapeOp::PairDots {
            a: a.0,
            b: b.0,
            pairs,
            out,
        }))
    }

    pub fn elem_mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ma, mb) = (&self.nodes[a.0], &self.nodes[b.0]);
        if ma.shape() != mb.shape() {
            return Err(Error::Dimension(format!(
                "elem_mul: {:?} vs {:?}",
                ma.shape(),
                mb.shape()
            )));
        }
        let values = ma
            .values()
            .iter()
            .zip(mb.values())
            .map(|(&x, &y)| x * y)
            .collect();
        let value = DenseMatrix::from_vec(ma.rows(), ma.cols(), values)?;
        Ok(self.push(value, |out| TapeOp::ElemMul { a: a.0, b: b.0, out }))
    }

    /// Scalar `sum_i weights[i] * a_flat[i]` over the row-major flattening.
    pub fn weighted_sum(&mut self, a: Var, weights: Vec<f64>) -> Result<Var> {
        let ma = &self.nodes[a.0];
        if weights.len() != ma.len() {
            return Err(Error::Dimension(format!(
                "weighted_sum: {} weights for {} values",
                weights.len(),
                ma.len()
            )));
        }
        let acc: f64 = ma
            .values()
            .iter()
            .zip(&weights)
            .map(|(&v, &w)| w * v)
            .sum();
        let value = DenseMatrix::from_vec(1, 1, vec![acc])?;
        Ok(self.push(value, |out| TapeOp::WeightedSum {
            a: a.0,
            weights,
            out,
        }))
    }

    /// `-mean_p log(max(probs[picks[p]], PROB_FLOOR))`. Returns the scalar
    /// var and the number of entries that hit the floor.
    pub fn picked_neg_log_mean(
        &mut self,
        probs: Var,
        picks: Vec<(usize, usize)>,
    ) -> Result<(Var, usize)> {
        if picks.is_empty() {
            return Err(Error::Validation(
                "picked_neg_log_mean: empty pick set".into(),
            ));
        }
        let mp = &self.nodes[probs.0];
        if let Some(&(r, c)) = picks.iter().find(|&&(r, c)| r >= mp.rows() || c >= mp.cols()) {
            return Err(Error::Dimension(format!(
                "picked_neg_log_mean: pick ({}, {}) outside {:?}",
                r,
                c,
                mp.shape()
            )));
        }
        let mut clamped = 0usize;
        let mut acc = 0.0;
        for &(r, c) in &picks {
            let p = mp.get(r, c);
            let p = if p < PROB_FLOOR {
                clamped += 1;
                PROB_FLOOR
            } else {
                p
            };
            acc -= p.ln();
        }
        acc /= picks.len() as f64;
        let value = DenseMatrix::from_vec(1, 1, vec![acc])?;
        let var = self.push(value, |out| TapeOp::PickedNegLogMean {
            probs: probs.0,
            picks,
            out,
        });
        Ok((var, clamped))
    }

    /// `-(1/rows) * sum_{r,c} p log p`, with `0 log 0 = 0`.
    pub fn entropy_mean(&mut self, probs: Var) -> Var {
        let mp = &self.nodes[probs.0];
        let rows = mp.rows();
        let mut acc = 0.0;
        for &p in mp.values() {
            if p > 0.0 {
                acc -= p * p.ln();
            }
        }
        acc /= rows as f64;
        let value = DenseMatrix::from_vec(1, 1, vec![acc]).expect("finite entropy");
        self.push(value, |out| TapeOp::EntropyMean { probs: probs.0, out })
    }

    /// Contrastive objective over paired dot products. For each row `i`,
    /// with `p = pos[i,0]/tau` and `n_k = negs[i,k]/tau`:
    ///
    /// `L_i = -log( e^p / (e^p + mean_k e^{n_k}) )`
    ///
    /// computed via max-shift so exponentials never overflow. Output is the
    /// mean of `L_i` over rows.
    pub fn info_nce_mean(&mut self, pos: Var, negs: Var, tau: f64) -> Result<Var> {
        if tau <= 0.0 {
            return Err(Error::Validation(format!("temperature {} not > 0", tau)));
        }
        let (mp, mn) = (&self.nodes[pos.0], &self.nodes[negs.0]);
        if mp.cols() != 1 || mp.rows() != mn.rows() || mn.cols() == 0 {
            return Err(Error::Dimension(format!(
                "info_nce_mean: pos {:?} vs negs {:?}",
                mp.shape(),
                mn.shape()
            )));
        }
        let n = mp.rows();
        let m = mn.cols() as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let p = mp.get(i, 0) / tau;
            let neg_row = mn.row(i);
            let shift = neg_row
                .iter()
                .map(|&v| v / tau)
                .fold(p, f64::max);
            let mut denom = (p - shift).exp();
            for &v in neg_row {
                denom += (v / tau - shift).exp() / m;
            }
            acc += -p + shift + denom.ln();
        }
        acc /= n as f64;
        let value = DenseMatrix::from_vec(1, 1, vec![acc])?;
        Ok(self.push(value, |out| TapeOp::InfoNceMean {
            pos: pos.0,
            negs: negs.0,
            tau,
            out,
        }))
    }

    /// Reverse sweep from a scalar loss. Visits ops in exact reverse
    /// execution order; returns gradients for leaf vars. A leaf that does
    /// not participate in the loss has an exactly-zero gradient.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        let shape = self.nodes[loss.0].shape();
        if shape != (1, 1) {
            return Err(Error::Dimension(format!(
                "backward: loss must be 1x1, got {:?}",
                shape
            )));
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(DenseMatrix::from_vec(1, 1, vec![1.0])?);

        for op in self.ops.iter().rev() {
            self.backward_op(op, &mut grads)?;
        }

        let shapes = self.nodes.iter().map(|n| n.shape()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn backward_op(&self, op: &TapeOp, grads: &mut [Option<DenseMatrix>]) -> Result<()> {
        // Each op produced a unique output, already fully accumulated by the
        // time the reverse sweep reaches it, so consuming it here is safe.
        match op {
            TapeOp::Matmul { a, b, out } => {
                let Some(go) = grads[*out].take() else { return Ok(()) };
                let da = dense_matmul_a_bt(&go, &self.nodes[*b])?;
                let db = dense_matmul_at_b(&self.nodes[*a], &go)?;
                accumulate(&mut grads[*a], da)?;
                accumulate(&mut grads[*b], db)?;
            }
            TapeOp::Spmm { s, d, out } => {
                let Some(go) = grads[*out].take() else { return Ok(()) };
                let dd = spmm_transpose(s, &go)?;
                accumulate(&mut grads[*d], dd)?;
            }
            TapeOp::Add { a, b, out } => {
                let Some(go) = grads[*out].take() else { return Ok(()) };
                accumulate(&mut grads[*a], go.clone())?;
                accumulate(&mut grads[*b], go)?;
            }
            TapeOp::AddRowBroadcast { a, bias, out } => {
                let Some(go) = grads[*out].take() else { return Ok(()) };
                let mut dbias = DenseMatrix::zeros(1, go.cols());
                for r in 0..go.rows() {
                    for (o, &gv) in dbias.row_mut(0).iter_mut().zip(go.row(r)) {
                        *o += gv;
                    }
                }
                accumulate(&mut grads[*bias], dbias)?;
                accumulate(&mut grads[*a], go)?;
            }
            TapeOp::ScaleConst { a, c, out } => {
                let Some(go) = grads[*out].take() else { return Ok(()) };
                accumulate(&mut grads[*a], go.map(|v| c * v))?;
            }
            TapeOp::AddScalarConst { a, out } => {
                let Some(go) = grads[*out].take() else { return Ok(()) };
                accumulate(&mut grads[*a], go)?;
            }
            TapeOp::Relu { a, out } => {
                let Some(go) = grads[*out].take() else { return Ok(()) };
                let ma = &self.nodes[*a];
                let values = go
                    .values()
                    .iter()
                    .zip(ma.values())
                    .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
                    .collect();
                accumulate(
                    &mut grads[*a],
                    DenseMatrix::from_vec(go.rows(), go.cols(), values)?,
                )?;
            }
            TapeOp::Sigmoid { a, out } => {
                let Some(go) = grads[*out].take() else { return Ok(()) };
                let mo = &self.nodes[*out];
                let values = go
                    .values()
                    .iter()
                    .zip(mo.values())
                    .map(|(&g, &s)| g * s * (1.0 - s))
                    .collect();
                accumulate(
                    &mut grads[*a],
                    DenseMatrix::from_vec(go.rows(), go.cols(), values)?,
                )?;
            }
            TapeOp::RowSoftmax { a, out } => {
                let Some(go) = grads[*out].take() else { return Ok(()) };
                let mo = &self.nodes[*out];
                let mut da = DenseMatrix::zeros(go.rows(), go.cols());
                for r in 0..go.rows() {
                    let dot = crate::numkernel::dense::dot(go.row(r), mo.row(r));
                    let (orow, (grow, srow)) =
                        (da.row_mut(r), (go.row(r), mo.row(r)));
                    for ((o, &g), &s) in orow.iter_mut().zip(grow).zip(srow) {
                        *o = s * (g - dot);
                    }
                }
                accumulate(&mut grads[*a], da)?;
            }
            TapeOp::GatherRows { a, rows, out } => {
                let Some(go) = grads[*out].take() else { return Ok(()) };
                let ma = &self.nodes[*a];
                let mut da = DenseMatrix::zeros(ma.rows(), ma.cols());
                for (p, &r) in rows.iter().enumerate() {
                    for (o, &g) in da.row_mut(r).iter_mut().zip(go.row(p)) {
                        *o += g;
                    }
                }
                accumulate(&mut grads[*a], da)?;
            }
            TapeOp::PairDots { a, b, pairs, out } => {
                let Some(go) = grads[*out].take() else { return Ok(()) };
                let (ma, mb) = (&self.nodes[*a], &self.nodes[*b]);
                let mut da = DenseMatrix::zeros(ma.rows(), ma.cols());
                let mut db = DenseMatrix::zeros(mb.rows(), mb.cols());
                for (p, &(ra, rb)) in pairs.iter().enumerate() {
                    let g = go.values()[p];
                    for (o, &v) in da.row_mut(ra).iter_mut().zip(mb.row(rb)) {
                        *o += g * v;
                    }
                    for (o, &v) in db.row_mut(rb).iter_mut().zip(ma.row(ra)) {
                        *o += g * v;
                    }
                }
                accumulate(&mut grads[*a], da)?;
                accumulate(&mut grads[*b], db)?;
            }
            TapeOp::ElemMul { a, b, out } => {
                let Some(go) = grads[*out].take() else { return Ok(()) };
                let (ma, mb) = (&self.nodes[*a], &self.nodes[*b]);
                let da: Vec<f64> = go
                    .values()
                    .iter()
                    .zip(mb.values())
                    .map(|(&g, &v)| g * v)
                    .collect();
                let db: Vec<f64> = go
                    .values()
                    .iter()
                    .zip(ma.values())
                    .map(|(&g, &v)| g * v)
                    .collect();
                accumulate(&mut grads[*a], DenseMatrix::from_vec(go.rows(), go.cols(), da)?)?;
                accumulate(&mut grads[*b], DenseMatrix::from_vec(go.rows(), go.cols(), db)?)?;
            }
            TapeOp::WeightedSum { a, weights, out } => {
                let Some(go) = grads[*out].take() else { return Ok(()) };
                let g = go.get(0, 0);
                let ma = &self.nodes[*a];
                let values = weights.iter().map(|&w| g * w).collect();
                accumulate(
                    &mut grads[*a],
                    DenseMatrix::from_vec(ma.rows(), ma.cols(), values)?,
                )?;
            }
            TapeOp::PickedNegLogMean { probs, picks, out } => {
                let Some(go) = grads[*out].take() else { return Ok(()) };
                let g = go.get(0, 0);
                let mp = &self.nodes[*probs];
                let mut dp = DenseMatrix::zeros(mp.rows(), mp.cols());
                let scale = -g / picks.len() as f64;
                for &(r, c) in picks {
                    let p = mp.get(r, c);
                    // Clamped entries sit on the flat branch of max(p, floor).
                    if p >= PROB_FLOOR {
                        dp.set(r, c, dp.get(r, c) + scale / p);
                    }
                }
                accumulate(&mut grads[*probs], dp)?;
            }
            TapeOp::EntropyMean { probs, out } => {
                let Some(go) = grads[*out].take() else { return Ok(()) };
                let g = go.get(0, 0);
                let mp = &self.nodes[*probs];
                let rows = mp.rows() as f64;
                let values = mp
                    .values()
                    .iter()
                    .map(|&p| if p > 0.0 { -g * (p.ln() + 1.0) / rows } else { 0.0 })
                    .collect();
                accumulate(
                    &mut grads[*probs],
                    DenseMatrix::from_vec(mp.rows(), mp.cols(), values)?,
                )?;
            }
            TapeOp::InfoNceMean { pos, negs, tau, out } => {
                let Some(go) = grads[*out].take() else { return Ok(()) };
                let g = go.get(0, 0);
                let (mp, mn) = (&self.nodes[*pos], &self.nodes[*negs]);
                let n = mp.rows();
                let m = mn.cols() as f64;
                let mut dpos = DenseMatrix::zeros(n, 1);
                let mut dnegs = DenseMatrix::zeros(n, mn.cols());
                let outer = g / (n as f64 * tau);
                for i in 0..n {
                    let p = mp.get(i, 0) / tau;
                    let neg_row = mn.row(i);
                    let shift = neg_row.iter().map(|&v| v / tau).fold(p, f64::max);
                    let ea = (p - shift).exp();
                    let mut denom = ea;
                    for &v in neg_row {
                        denom += (v / tau - shift).exp() / m;
                    }
                    dpos.set(i, 0, outer * (ea / denom - 1.0));
                    for (k, o) in dnegs.row_mut(i).iter_mut().enumerate() {
                        let eb = (mn.get(i, k) / tau - shift).exp() / m;
                        *o = outer * (eb / denom);
                    }
                }
                accumulate(&mut grads[*pos], dpos)?;
                accumulate(&mut grads[*negs], dnegs)?;
            }
        }
        Ok(())
    }
}

fn accumulate(slot: &mut Option<DenseMatrix>, delta: DenseMatrix) -> Result<()> {
    match slot {
        Some(existing) => existing.add_assign(&delta),
        None => {
            *slot = Some(delta);
            Ok(())
        }
    }
}

/// Gradients for leaf vars after [`Tape::backward`]. Intermediate vars are
/// consumed during the sweep and report zeros.
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; exactly zero when no
    /// gradient reached it.
    pub fn wrt(&self, v: Var) -> DenseMatrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                DenseMatrix::zeros(r, c)
            }
        }
    }
}

pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
