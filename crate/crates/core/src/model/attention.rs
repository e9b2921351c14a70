use super::lstm::affine;
use crate::numcore::{Axis, BoundParams, NumError, Tape, Var};

#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    /// `a × 2·hidden`, acting on `[s_prev ; h_i]`.
    pub w_e: Var,
    pub b_e: Var,
    /// `1 × a` scoring vector.
    pub v: Var,
    /// `hidden × 2·hidden`, acting on `[c ; h_T]`.
    pub w_enc: Var,
    pub b_enc: Var,
}

impl AttentionVars {
    pub fn bind(p: &BoundParams) -> Result<Self, NumError> {
        Ok(AttentionVars {
            w_e: p.get("attn.w_e")?,
            b_e: p.get("attn.b_e")?,
            v: p.get("attn.v")?,
            w_enc: p.get("attn.w_enc")?,
            b_enc: p.get("attn.b_enc")?,
        })
    }
}

/// Additive score `e = vᵀ tanh(W_e [s_prev ; h_i] + b_e)`, one per batch row
/// (`B × 1`).
pub fn attention_score(tape: &mut Tape, s_prev: Var, h_i: Var, p: &AttentionVars) -> Result<Var, NumError> {
    let joined = tape.concat(&[s_prev, h_i], Axis::Cols)?;
    let pre = affine(tape, joined, p.w_e, p.b_e)?;
    let z = tape.tanh(pre)?;
    tape.matmul_t(z, p.v)
}

/// Attention over the earlier hidden states, read at the last step.
#[derive(Clone, Debug)]
pub struct TemporalAttention {
    /// `B × (T-1)` raw scores.
    pub scores: Var,
    /// `B × (T-1)` softmax weights.
    pub weights: Var,
    /// `B × hidden` context vector.
    pub context: Var,
    /// `B × hidden` encoded vector `tanh(W [c ; h_T] + b)`.
    pub encoded: Var,
}

/// Scores `h_1..h_{T-1}` against the cell state `s_{T-1}`, mixes them into a
/// context vector and combines it with `h_T`.
pub fn temporal_attention(
    tape: &mut Tape,
    hidden: &[Var],
    cells: &[Var],
    p: &AttentionVars,
) -> Result<TemporalAttention, NumError> {
    let t = hidden.len();
    if t < 2 || cells.len() != t {
        return Err(NumError::Contract(format!(
            "temporal attention needs at least 2 steps, got {t}"
        )));
    }
    let s_prev = cells[t - 2];
    let scores = hidden[..t - 1]
        .iter()
        .map(|&h| attention_score(tape, s_prev, h, p))
        .collect::<Result<Vec<_>, _>>()?;
    let scores = tape.concat(&scores, Axis::Cols)?;
    let weights = tape.softmax(scores, Axis::Cols)?;

    let mut context = None;
    for (i, &h) in hidden[..t - 1].iter().enumerate() {
        let w = tape.slice_cols(weights, i, 1)?;
        let term = tape.mul_col(h, w)?;
        context = Some(match context {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    let context = context.expect("at least one prior step");
    let joined = tape.concat(&[context, hidden[t - 1]], Axis::Cols)?;
    let pre = affine(tape, joined, p.w_enc, p.b_enc)?;
    let encoded = tape.tanh(pre)?;
    Ok(TemporalAttention {
        scores,
        weights,
        context,
        encoded,
    })
}
