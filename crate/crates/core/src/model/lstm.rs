use crate::numcore::{Axis, BoundParams, NumError, Tape, Var};

/// Tape handles for the four LSTM gate blocks. Each `W` is
/// `hidden × (hidden + input)` and acts on `[h_prev ; x]`.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w_f: Var,
    pub b_f: Var,
    pub w_i: Var,
    pub b_i: Var,
    pub w_o: Var,
    pub b_o: Var,
    pub w_s: Var,
    pub b_s: Var,
}

impl LstmVars {
    pub fn bind(p: &BoundParams) -> Result<Self, NumError> {
        Ok(LstmVars {
            w_f: p.get("lstm.w_f")?,
            b_f: p.get("lstm.b_f")?,
            w_i: p.get("lstm.w_i")?,
            b_i: p.get("lstm.b_i")?,
            w_o: p.get("lstm.w_o")?,
            b_o: p.get("lstm.b_o")?,
            w_s: p.get("lstm.w_s")?,
            b_s: p.get("lstm.b_s")?,
        })
    }
}

/// Outputs of one cell step, including the gate activations.
#[derive(Clone, Copy, Debug)]
pub struct LstmStep {
    pub h: Var,
    pub s: Var,
    pub forget: Var,
    pub input: Var,
    pub output: Var,
}

pub(crate) fn affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var, NumError> {
    let xw = tape.matmul_t(x, w)?;
    tape.add_row(xw, b)
}

/// One LSTM cell update over a batch (rows are samples):
///
/// ```text
/// f = σ(W_f [h;x] + b_f)    i = σ(W_i [h;x] + b_i)    o = σ(W_o [h;x] + b_o)
/// s' = f ⊙ s + i ⊙ tanh(W_s [h;x] + b_s)
/// h' = o ⊙ tanh(s')
/// ```
pub fn lstm_step(tape: &mut Tape, h_prev: Var, s_prev: Var, x: Var, p: &LstmVars) -> Result<LstmStep, NumError> {
    let hx = tape.concat(&[h_prev, x], Axis::Cols)?;
    let pre_f = affine(tape, hx, p.w_f, p.b_f)?;
    let forget = tape.sigmoid(pre_f)?;
    let pre_i = affine(tape, hx, p.w_i, p.b_i)?;
    let input = tape.sigmoid(pre_i)?;
    let pre_o = affine(tape, hx, p.w_o, p.b_o)?;
    let output = tape.sigmoid(pre_o)?;
    let pre_s = affine(tape, hx, p.w_s, p.b_s)?;
    let candidate = tape.tanh(pre_s)?;

    let kept = tape.mul(forget, s_prev)?;
    let written = tape.mul(input, candidate)?;
    let s = tape.add(kept, written)?;
    let squashed = tape.tanh(s)?;
    let h = tape.mul(output, squashed)?;
    Ok(LstmStep {
        h,
        s,
        forget,
        input,
        output,
    })
}
