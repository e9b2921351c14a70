//! LSTM encoder with temporal attention, a linear projection head, and a
//! single-layer transformer encoder used as an ablation.

mod attention;
mod lstm;
mod transformer;


pub use attention::{attention_score, temporal_attention, AttentionVars, TemporalAttention};
pub use lstm::{lstm_step, LstmStep, LstmVars};
pub use transformer::{encoder_layer, self_attention_scores, transformer_encode, TransformerVars};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::SiteSample;
use crate::numcore::{BoundParams, NumError, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Lstm,
    Transformer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    pub input_dim: usize,
    pub hidden: usize,
    pub attention_dim: usize,
    pub out_dim: usize,
    pub d_k: usize,
    pub ffn_hidden: usize,
    pub dropout: f64,
}

impl ModelConfig {
    pub fn lstm(input_dim: usize) -> Self {
        ModelConfig {
            encoder: EncoderKind::Lstm,
            input_dim,
            hidden: 128,
            attention_dim: 64,
            out_dim: 32,
            d_k: 64,
            ffn_hidden: 128,
            dropout: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), NumError> {
        let dims = [
            ("input_dim", self.input_dim),
            ("hidden", self.hidden),
            ("attention_dim", self.attention_dim),
            ("out_dim", self.out_dim),
            ("d_k", self.d_k),
            ("ffn_hidden", self.ffn_hidden),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(NumError::Contract(format!("model {name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NumError::Contract(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Width of the vector fed to the projection head.
    pub fn encoded_dim(&self) -> usize {
        match self.encoder {
            EncoderKind::Lstm => self.hidden,
            EncoderKind::Transformer => self.input_dim,
        }
    }

    /// Expected parameter names and shapes, in initialization order.
    pub fn param_shapes(&self) -> Vec<(String, [usize; 2])> {
        let mut out = Vec::new();
        let mut push = |name: &str, r: usize, c: usize| out.push((name.to_string(), [r, c]));
        match self.encoder {
            EncoderKind::Lstm => {
                let (h, d, a) = (self.hidden, self.input_dim, self.attention_dim);
                for gate in ["f", "i", "o", "s"] {
                    push(&format!("lstm.w_{gate}"), h, h + d);
                    push(&format!("lstm.b_{gate}"), 1, h);
                }
                push("attn.w_e", a, 2 * h);
                push("attn.b_e", 1, a);
                push("attn.v", 1, a);
                push("attn.w_enc", h, 2 * h);
                push("attn.b_enc", 1, h);
            }
            EncoderKind::Transformer => {
                let (d, k, f) = (self.input_dim, self.d_k, self.ffn_hidden);
                push("tf.w_q", k, d);
                push("tf.w_k", k, d);
                push("tf.w_v", k, d);
                push("tf.w_1", f, k);
                push("tf.b_1", 1, f);
                push("tf.w_2", d, f);
                push("tf.b_2", 1, d);
            }
        }
        push("head.w", self.out_dim, self.encoded_dim());
        push("head.b", 1, self.out_dim);
        out
    }
}

/// A batch in time-major layout: `steps[t]` is `B × input_dim`.
#[derive(Clone, Debug)]
pub struct SequenceBatch {
    pub steps: Vec<Tensor>,
}

impl SequenceBatch {
    pub fn from_samples(samples: &[&SiteSample]) -> Result<Self, NumError> {
        let first = samples
            .first()
            .ok_or_else(|| NumError::Contract("empty batch".into()))?;
        let (t, d) = (first.window(), first.dim());
        let mut steps = Vec::with_capacity(t);
        for step in 0..t {
            let mut data = Vec::with_capacity(samples.len() * d);
            for s in samples {
                if s.window() != t || s.dim() != d {
                    return Err(NumError::Contract(format!(
                        "sample shape {}x{} differs from batch shape {t}x{d}",
                        s.window(),
                        s.dim()
                    )));
                }
                data.extend_from_slice(&s.inputs[step]);
            }
            steps.push(Tensor::from_vec(samples.len(), d, data)?);
        }
        Ok(SequenceBatch { steps })
    }

    pub fn batch_size(&self) -> usize {
        self.steps.first().map_or(0, |s| s.rows())
    }
}

/// Tape handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// `B × out_dim` projections.
    pub phi: Var,
    /// `B × encoded_dim` encoder output after dropout.
    pub encoded: Var,
    /// Temporal attention internals (LSTM encoder only).
    pub attention: Option<TemporalAttention>,
    pub hidden: Vec<Var>,
    pub cells: Vec<Var>,
}

/// Runs the LSTM over all steps from zero initial state and applies temporal
/// attention at the last step. Returns (attention, hidden states, cell states).
pub fn encode(
    tape: &mut Tape,
    params: &BoundParams,
    steps: &[Var],
) -> Result<(TemporalAttention, Vec<Var>, Vec<Var>), NumError> {
    if steps.len() < 2 {
        return Err(NumError::Contract(format!(
            "encoder needs T >= 2, got {}",
            steps.len()
        )));
    }
    let lstm = LstmVars::bind(params)?;
    let attn = AttentionVars::bind(params)?;
    let batch = tape.value(steps[0]).rows();
    let hidden_dim = tape.value(lstm.b_f).cols();
    let mut h = tape.constant(Tensor::zeros(batch, hidden_dim));
    let mut s = tape.constant(Tensor::zeros(batch, hidden_dim));
    let mut hs = Vec::with_capacity(steps.len());
    let mut ss = Vec::with_capacity(steps.len());
    for &x in steps {
        let step = lstm_step(tape, h, s, x, &lstm)?;
        h = step.h;
        s = step.s;
        hs.push(h);
        ss.push(s);
    }
    let att = temporal_attention(tape, &hs, &ss, &attn)?;
    Ok((att, hs, ss))
}

/// Linear head `φ = W ĥ + b` over a batch of encoded rows.
pub fn project(tape: &mut Tape, encoded: Var, params: &BoundParams) -> Result<Var, NumError> {
    let w = params.get("head.w")?;
    let b = params.get("head.b")?;
    lstm::affine(tape, encoded, w, b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    /// Weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero, forget-gate
    /// bias one.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self, NumError> {
        config.validate()?;
        let mut params = ParamStore::new();
        for (name, [r, c]) in config.param_shapes() {
            let is_bias = name.contains(".b_") || name.ends_with(".b");
            let t = if is_bias {
                let fill = if name == "lstm.b_f" { 1.0 } else { 0.0 };
                Tensor::full(r, c, fill)
            } else {
                ParamStore::uniform_fan_in(r, c, rng)
            };
            params.insert(name, t);
        }
        Ok(Model { config, params })
    }

    /// Checks that `params` holds exactly the tensors `config` expects.
    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self, NumError> {
        config.validate()?;
        let expected = config.param_shapes();
        if expected.len() != params.len() {
            return Err(NumError::Contract(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in expected {
            let t = params
                .get(&name)
                .ok_or_else(|| NumError::Contract(format!("missing parameter {name}")))?;
            if t.shape() != shape {
                return Err(NumError::Contract(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    shape
                )));
            }
        }
        Ok(Model { config, params })
    }

    /// Full forward pass on an already-bound parameter set. Dropout is applied
    /// to the encoder output only when `dropout_rng` is given.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        batch: &SequenceBatch,
        dropout_rng: Option<&mut dyn rand::RngCore>,
    ) -> Result<Forward, NumError> {
        let steps: Vec<Var> = batch.steps.iter().map(|s| tape.constant(s.clone())).collect();
        let (encoded, attention, hidden, cells) = match self.config.encoder {
            EncoderKind::Lstm => {
                let (att, hs, ss) = encode(tape, params, &steps)?;
                (att.encoded, Some(att), hs, ss)
            }
            EncoderKind::Transformer => {
                let vars = TransformerVars::bind(params, self.config.d_k)?;
                (transformer_encode(tape, &steps, &vars)?, None, Vec::new(), Vec::new())
            }
        };
        let encoded = match dropout_rng {
            Some(rng) => tape.dropout(encoded, self.config.dropout, rng, true)?,
            None => encoded,
        };
        let phi = project(tape, encoded, params)?;
        Ok(Forward {
            phi,
            encoded,
            attention,
            hidden,
            cells,
        })
    }

    /// Eval-mode projections for `samples`, one row per sample.
    pub fn embed(&self, samples: &[&SiteSample], batch_size: usize) -> Result<Vec<Vec<f64>>, NumError> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(batch_size.max(1)) {
            let batch = SequenceBatch::from_samples(chunk)?;
            let mut tape = Tape::new();
            let bound = self.params.bind(&mut tape, false);
            let fwd = self.forward(&mut tape, &bound, &batch, None)?;
            let phi = tape.value(fwd.phi);
            for r in 0..phi.rows() {
                out.push(phi.row_slice(r).to_vec());
            }
        }
        Ok(out)
    }
}
