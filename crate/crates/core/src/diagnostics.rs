//! Finite-difference gradient checks over every tape primitive and over the
//! full encoder + head + loss path.

use rand::Rng;
use serde::Serialize;

use crate::loss::{hsc_loss, LossConfig};
use crate::model::{Model, ModelConfig, SequenceBatch};
use crate::numcore::{grad_check_inputs, Axis, BoundParams, NumError, Tape, Tensor, Var};
use crate::rng::substream;

pub const PRIMITIVE_TOLERANCE: f64 = 1e-5;
pub const MODEL_TOLERANCE: f64 = 1e-3;
const FD_STEP: f64 = 1e-6;
const MODEL_FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckRow {
    fn new(name: impl Into<String>, max_rel_error: f64, tolerance: f64) -> Self {
        CheckRow {
            name: name.into(),
            max_rel_error,
            tolerance,
            passed: max_rel_error < tolerance,
        }
    }
}

/// How a primitive's inputs are drawn.
#[derive(Clone, Copy)]
enum Domain {
    Any,
    Positive,
    /// Uniform on (-1, 1) but kept at least 0.05 away from each listed kink.
    AwayFrom(&'static [f64]),
}

fn draw(rows: usize, cols: usize, domain: Domain, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| match domain {
            Domain::Any => rng.random_range(-1.5..1.5),
            Domain::Positive => rng.random_range(0.5..2.0),
            Domain::AwayFrom(kinks) => loop {
                let x: f64 = rng.random_range(-1.0..1.0);
                if kinks.iter().all(|k| (x - k).abs() > 0.05) {
                    break x;
                }
            },
        })
        .collect();
    Tensor::from_vec(rows, cols, data).expect("positive dims")
}

type PrimitiveFn = fn(&mut Tape, &[Var]) -> Result<Var, NumError>;

struct Primitive {
    name: &'static str,
    shapes: &'static [[usize; 2]],
    domain: Domain,
    f: PrimitiveFn,
}

fn primitives() -> Vec<Primitive> {
    fn p(name: &'static str, shapes: &'static [[usize; 2]], domain: Domain, f: PrimitiveFn) -> Primitive {
        Primitive { name, shapes, domain, f }
    }
    use Domain::*;
    vec![
        p("matmul", &[[3, 4], [4, 2]], Any, |t, v| t.matmul(v[0], v[1])),
        p("matmul_t", &[[3, 4], [2, 4]], Any, |t, v| t.matmul_t(v[0], v[1])),
        p("add", &[[3, 2], [3, 2]], Any, |t, v| t.add(v[0], v[1])),
        p("sub", &[[3, 2], [3, 2]], Any, |t, v| t.sub(v[0], v[1])),
        p("mul", &[[3, 2], [3, 2]], Any, |t, v| t.mul(v[0], v[1])),
        p("add_row", &[[3, 4], [1, 4]], Any, |t, v| t.add_row(v[0], v[1])),
        p("mul_col", &[[3, 4], [3, 1]], Any, |t, v| t.mul_col(v[0], v[1])),
        p("scale", &[[2, 3]], Any, |t, v| t.scale(v[0], -1.7)),
        p("add_scalar", &[[2, 3]], Any, |t, v| t.add_scalar(v[0], 0.3)),
        p("concat_cols", &[[2, 3], [2, 1]], Any, |t, v| t.concat(&[v[0], v[1]], Axis::Cols)),
        p("concat_rows", &[[2, 3], [1, 3]], Any, |t, v| t.concat(&[v[0], v[1]], Axis::Rows)),
        p("slice_cols", &[[3, 5]], Any, |t, v| t.slice_cols(v[0], 1, 3)),
        p("slice_rows", &[[4, 2]], Any, |t, v| t.slice_rows(v[0], 1, 2)),
        p("sigmoid", &[[3, 3]], Any, |t, v| t.sigmoid(v[0])),
        p("tanh", &[[3, 3]], Any, |t, v| t.tanh(v[0])),
        p("relu", &[[3, 3]], AwayFrom(&[0.0]), |t, v| t.relu(v[0])),
        p("exp", &[[3, 3]], Any, |t, v| t.exp(v[0])),
        p("log", &[[3, 3]], Positive, |t, v| t.log(v[0])),
        p("sqrt", &[[3, 3]], Positive, |t, v| t.sqrt(v[0])),
        p("recip", &[[3, 3]], Positive, |t, v| t.recip(v[0])),
        p("clamp", &[[3, 3]], AwayFrom(&[-0.5, 0.5]), |t, v| t.clamp(v[0], -0.5, 0.5)),
        p("softmax_rows", &[[4, 3]], Any, |t, v| t.softmax(v[0], Axis::Rows)),
        p("softmax_cols", &[[3, 4]], Any, |t, v| t.softmax(v[0], Axis::Cols)),
        p("sum", &[[3, 4]], Any, |t, v| t.sum(v[0])),
        p("mean", &[[3, 4]], Any, |t, v| t.mean(v[0])),
        p("sum_axis_rows", &[[3, 4]], Any, |t, v| t.sum_axis(v[0], Axis::Rows)),
        p("sum_axis_cols", &[[3, 4]], Any, |t, v| t.sum_axis(v[0], Axis::Cols)),
        p("sq_norm_rows", &[[3, 4]], Any, |t, v| t.sq_norm_rows(v[0])),
        p("sq_norm", &[[3, 4]], Any, |t, v| t.sq_norm(v[0])),
        p("dropout", &[[4, 4]], Any, |t, v| {
            let mut rng = substream(7, "gradcheck-dropout", &[]);
            t.dropout(v[0], 0.3, &mut rng, true)
        }),
    ]
}

/// Reduces a primitive's output to a scalar through a fixed random weighting
/// so every output entry contributes a distinct coefficient.
fn weighted_sum(tape: &mut Tape, out: Var, weights: &Tensor) -> Result<Var, NumError> {
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

/// Worst relative error of each primitive over `points` random inputs.
pub fn primitive_grad_checks(seed: u64, points: usize) -> Result<Vec<CheckRow>, NumError> {
    let mut rows = Vec::new();
    for (idx, prim) in primitives().into_iter().enumerate() {
        let mut rng = substream(seed, "gradcheck-primitive", &[idx as u64]);
        let mut worst = 0.0f64;
        for _ in 0..points {
            let inputs: Vec<Tensor> = prim
                .shapes
                .iter()
                .map(|&[r, c]| draw(r, c, prim.domain, &mut rng))
                .collect();
            let probe = {
                let mut tape = Tape::new();
                let vars: Vec<Var> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
                let out = (prim.f)(&mut tape, &vars)?;
                tape.value(out).shape()
            };
            let weights = draw(probe[0], probe[1], Domain::Any, &mut rng);
            let f = prim.f;
            let err = grad_check_inputs(
                |tape, vars| {
                    let out = f(tape, vars)?;
                    weighted_sum(tape, out, &weights)
                },
                &inputs,
                FD_STEP,
                None,
            )?;
            worst = worst.max(err);
        }
        rows.push(CheckRow::new(prim.name, worst, PRIMITIVE_TOLERANCE));
    }
    Ok(rows)
}

/// Small LSTM + attention + HSC configuration used by the full-path check.
pub fn small_model_config() -> ModelConfig {
    ModelConfig {
        hidden: 8,
        attention_dim: 6,
        out_dim: 4,
        d_k: 4,
        ffn_hidden: 8,
        ..ModelConfig::lstm(5)
    }
}

fn random_batch(batch: usize, window: usize, dim: usize, rng: &mut impl Rng) -> SequenceBatch {
    SequenceBatch {
        steps: (0..window).map(|_| draw(batch, dim, Domain::Any, rng)).collect(),
    }
}

/// Checks d(HSC loss)/dθ for every parameter of a hidden=8, T=5, out_dim=4
/// model against central differences.
pub fn model_grad_check(seed: u64, config: &ModelConfig) -> Result<CheckRow, NumError> {
    let mut rng = substream(seed, "gradcheck-model", &[]);
    let model = Model::init(config.clone(), &mut rng)?;
    let batch = random_batch(4, 5, config.input_dim, &mut rng);
    let labels = [1u8, 0, 1, 0];
    let names: Vec<String> = model.params.names().map(str::to_string).collect();
    let points: Vec<Tensor> = model.params.iter().map(|(_, t)| t.clone()).collect();
    let loss_cfg = LossConfig::default();
    let err = grad_check_inputs(
        |tape, vars| {
            let bound = BoundParams::from_vars(names.iter().cloned(), vars);
            let fwd = model.forward(tape, &bound, &batch, None)?;
            hsc_loss(tape, fwd.phi, &labels, &loss_cfg)
        },
        &points,
        MODEL_FD_STEP,
        None,
    )?;
    let name = format!("model_{:?}_hsc", config.encoder).to_lowercase();
    Ok(CheckRow::new(name, err, MODEL_TOLERANCE))
}

/// Negative control: `f(x) = Σ x ⊙ x̄` where `x̄` is a value copy the tape does
/// not track, so the recorded gradient is half the true one. A working checker
/// reports a large error here; the row passes only if the check fails.
pub fn corrupted_gradient_control(seed: u64) -> Result<CheckRow, NumError> {
    let mut rng = substream(seed, "gradcheck-control", &[]);
    let x = draw(3, 3, Domain::Positive, &mut rng);
    let err = grad_check_inputs(
        |tape, vars| {
            let hidden = tape.constant(tape.value(vars[0]).clone());
            let prod = tape.mul(vars[0], hidden)?;
            tape.sum(prod)
        },
        std::slice::from_ref(&x),
        FD_STEP,
        None,
    )?;
    Ok(CheckRow {
        name: "corrupted_gradient_control".into(),
        max_rel_error: err,
        tolerance: PRIMITIVE_TOLERANCE,
        passed: err >= PRIMITIVE_TOLERANCE,
    })
}

/// The full suite: every primitive at `points` random inputs, the LSTM model
/// path, the transformer ablation path and the negative control.
pub fn full_suite(seed: u64, points: usize) -> Result<Vec<CheckRow>, NumError> {
    let mut rows = primitive_grad_checks(seed, points)?;
    let lstm = small_model_config();
    rows.push(model_grad_check(seed, &lstm)?);
    let tf = ModelConfig {
        encoder: crate::model::EncoderKind::Transformer,
        ..lstm
    };
    rows.push(model_grad_check(seed, &tf)?);
    rows.push(corrupted_gradient_control(seed)?);
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_paths_pass() {
        let lstm = small_model_config();
        let row = model_grad_check(11, &lstm).unwrap();
        assert!(row.passed, "{row:?}");
        let tf = ModelConfig {
            encoder: crate::model::EncoderKind::Transformer,
            ..lstm
        };
        let row = model_grad_check(11, &tf).unwrap();
        assert!(row.passed, "{row:?}");
    }

    #[test]
    fn negative_control_is_detected() {
        let row = corrupted_gradient_control(3).unwrap();
        assert!(row.passed);
        assert!(row.max_rel_error > 0.1);
    }
}
