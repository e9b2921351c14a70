//! Single-layer, single-head self-attention encoder used as an ablation.

use super::lstm::affine;
use crate::numcore::{Axis, BoundParams, NumError, Tape, Var};

#[derive(Clone, Copy, Debug)]
pub struct TransformerVars {
    /// `d_k × input` each; `q_i = W_Q x_i`.
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub w_1: Var,
    pub b_1: Var,
    pub w_2: Var,
    pub b_2: Var,
    pub d_k: usize,
}

impl TransformerVars {
    pub fn bind(p: &BoundParams, d_k: usize) -> Result<Self, NumError> {
        Ok(TransformerVars {
            w_q: p.get("tf.w_q")?,
            w_k: p.get("tf.w_k")?,
            w_v: p.get("tf.w_v")?,
            w_1: p.get("tf.w_1")?,
            b_1: p.get("tf.b_1")?,
            w_2: p.get("tf.w_2")?,
            b_2: p.get("tf.b_2")?,
            d_k,
        })
    }
}

/// Scaled dot-product scores `q_i · k_j / sqrt(d_k)` for one sequence
/// (`T × d` in, `T × T` out).
pub fn self_attention_scores(tape: &mut Tape, x: Var, p: &TransformerVars) -> Result<(Var, Var), NumError> {
    let q = tape.matmul_t(x, p.w_q)?;
    let k = tape.matmul_t(x, p.w_k)?;
    let v = tape.matmul_t(x, p.w_v)?;
    let raw = tape.matmul_t(q, k)?;
    let scores = tape.scale(raw, 1.0 / (p.d_k as f64).sqrt())?;
    Ok((scores, v))
}

/// Encoder layer over one sequence: softmax attention, a two-layer ReLU
/// feed-forward block and a residual back to the input. Returns the `T × d`
/// per-position outputs.
pub fn encoder_layer(tape: &mut Tape, x: Var, p: &TransformerVars) -> Result<Var, NumError> {
    let (scores, v) = self_attention_scores(tape, x, p)?;
    let weights = tape.softmax(scores, Axis::Cols)?;
    let attended = tape.matmul(weights, v)?;
    let hidden = affine(tape, attended, p.w_1, p.b_1)?;
    let hidden = tape.relu(hidden)?;
    let out = affine(tape, hidden, p.w_2, p.b_2)?;
    tape.add(x, out)
}

/// Encodes a batch given as `T` tensors of shape `B × d`; each sequence is
/// mean-pooled over positions. Returns `B × d`.
pub fn transformer_encode(tape: &mut Tape, steps: &[Var], p: &TransformerVars) -> Result<Var, NumError> {
    let t = steps.len();
    if t == 0 {
        return Err(NumError::Contract("transformer needs at least one step".into()));
    }
    let batch = tape.value(steps[0]).rows();
    let mut pooled = Vec::with_capacity(batch);
    for b in 0..batch {
        let rows = steps
            .iter()
            .map(|&s| tape.slice_rows(s, b, 1))
            .collect::<Result<Vec<_>, _>>()?;
        let x = tape.concat(&rows, Axis::Rows)?;
        let y = encoder_layer(tape, x, p)?;
        let summed = tape.sum_axis(y, Axis::Rows)?;
        pooled.push(tape.scale(summed, 1.0 / t as f64)?);
    }
    tape.concat(&pooled, Axis::Rows)
}
