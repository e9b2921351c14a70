//! Mini-batch SGD training, validation-based threshold selection and
//! multi-trial orchestration.

mod threshold;

pub use threshold::{select_threshold, ThresholdChoice};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{SiteSample, Splits};
use crate::loss::{anomaly_score, batch_loss, init_center, LossConfig, LossMode};
use crate::metrics::{classify_report, MetricsError, MetricsReport};
use crate::model::{Model, ModelConfig, SequenceBatch};
use crate::numcore::{sgd_step, NumError, Tape, Var};
use crate::rng::{self, substream};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("non-finite value ({detail}) at epoch {epoch}, batch {batch}; max |grad| so far {max_grad:e}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        max_grad: f64,
        detail: String,
    },
    #[error("{0}")]
    Contract(String),
    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<TrainError>,
    },
}

impl TrainError {
    /// True for numerical failures (as opposed to bad inputs or settings).
    pub fn is_numeric(&self) -> bool {
        match self {
            TrainError::NonFinite { .. } => true,
            TrainError::Num(NumError::NonFinite(_)) | TrainError::Num(NumError::Domain { .. }) => true,
            TrainError::Trial { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Clipped to the training-set size.
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub trials: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            lr: 0.001,
            epochs: 50,
            trials: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.epochs == 0 || self.trials == 0 {
            return Err(TrainError::Contract(
                "batch_size, epochs and trials must be positive".into(),
            ));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Contract(format!("learning rate {} is invalid", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
}

/// Parameters and decision rule at the end of training.
#[derive(Clone, Debug, PartialEq)]
pub struct Fitted {
    pub model: Model,
    pub loss: LossConfig,
    pub threshold: f64,
    pub curve: Vec<EpochRecord>,
}

const EVAL_BATCH: usize = 512;

/// Eval-mode anomaly scores, in sample order.
pub fn score_samples(model: &Model, loss: &LossConfig, samples: &[SiteSample]) -> Result<Vec<f64>, TrainError> {
    let refs: Vec<&SiteSample> = samples.iter().collect();
    let chunks: Vec<Vec<f64>> = refs
        .par_chunks(EVAL_BATCH)
        .map(|chunk| -> Result<Vec<f64>, TrainError> {
            let phis = model.embed(chunk, EVAL_BATCH)?;
            phis.iter()
                .map(|phi| anomaly_score(phi, loss).map_err(TrainError::from))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

pub fn labels_of(samples: &[SiteSample]) -> Vec<u8> {
    samples.iter().map(|s| s.label).collect()
}

fn check_shapes(samples: &[SiteSample], window: usize, dim: usize, what: &str) -> Result<(), TrainError> {
    match samples.iter().find(|s| s.window() != window || s.dim() != dim) {
        Some(s) => Err(TrainError::Contract(format!(
            "{what} sample has shape {}x{}, expected {window}x{dim}",
            s.window(),
            s.dim()
        ))),
        None => Ok(()),
    }
}

fn max_abs_grad(grads: &crate::numcore::Gradients, vars: &[Var]) -> f64 {
    vars.iter()
        .filter_map(|&v| grads.get(v))
        .map(|g| g.data().iter().fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) }))
        .fold(0.0, |m, x| if x.is_nan() || m.is_nan() { f64::NAN } else { m.max(x) })
}

/// Trains one model from the trial seed and picks its threshold on `val`.
pub fn fit(
    train: &[SiteSample],
    val: &[SiteSample],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    trial_seed: u64,
) -> Result<Fitted, TrainError> {
    cfg.validate()?;
    loss_cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::Contract("training and validation sets must be nonempty".into()));
    }
    let (window, dim) = (train[0].window(), train[0].dim());
    if dim != model_cfg.input_dim {
        return Err(TrainError::Contract(format!(
            "samples have dimension {dim} but the model expects {}",
            model_cfg.input_dim
        )));
    }
    check_shapes(train, window, dim, "training")?;
    check_shapes(val, window, dim, "validation")?;

    let mut init_rng = substream(trial_seed, rng::WEIGHT_INIT, &[]);
    let mut model = Model::init(model_cfg.clone(), &mut init_rng)?;
    let mut loss = loss_cfg.clone();
    if loss.mode == LossMode::Deepsad && loss.center.is_none() {
        let normals: Vec<&SiteSample> = train.iter().filter(|s| s.is_normal()).collect();
        let phis = model.embed(&normals, EVAL_BATCH)?;
        loss.center = Some(init_center(&phis)?);
    }
    if let (LossMode::Deepsad, Some(c)) = (loss.mode, &loss.center) {
        if c.len() != model_cfg.out_dim {
            return Err(TrainError::Contract(format!(
                "center has {} entries but out_dim is {}",
                c.len(),
                model_cfg.out_dim
            )));
        }
    }

    let batch_size = cfg.batch_size.min(train.len());
    let val_labels = labels_of(val);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut max_grad = 0.0f64;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut substream(trial_seed, rng::SHUFFLE, &[epoch as u64]));
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(batch_size).enumerate() {
            let non_finite = |detail: String, max_grad: f64| TrainError::NonFinite {
                epoch,
                batch: b,
                max_grad,
                detail,
            };
            let samples: Vec<&SiteSample> = idx.iter().map(|&i| &train[i]).collect();
            let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
            let batch = SequenceBatch::from_samples(&samples)?;
            let mut tape = Tape::new();
            let bound = model.params.bind(&mut tape, true);
            let vars: Vec<Var> = bound.vars().collect();
            let mut drop_rng = substream(trial_seed, rng::DROPOUT, &[epoch as u64, b as u64]);
            let value = model
                .forward(&mut tape, &bound, &batch, Some(&mut drop_rng))
                .and_then(|fwd| batch_loss(&mut tape, fwd.phi, &labels, &vars, &loss));
            let value = match value {
                Ok(v) => v,
                Err(NumError::NonFinite(op)) => return Err(non_finite(format!("forward {op}"), max_grad)),
                Err(e) => return Err(e.into()),
            };
            let batch_loss_value = tape.value(value).item()?;
            let grads = tape.backward(value).map_err(|e| match e {
                NumError::NonFinite(op) => non_finite(format!("backward {op}"), max_grad),
                other => other.into(),
            })?;
            let g = max_abs_grad(&grads, &vars);
            if !g.is_finite() {
                return Err(non_finite("gradient".into(), g));
            }
            max_grad = max_grad.max(g);
            sgd_step(&mut model.params, &bound, grads, cfg.lr)?;
            loss_sum += batch_loss_value * samples.len() as f64;
        }
        let scores = score_samples(&model, &loss, val)?;
        let choice = select_threshold(&scores, &val_labels)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / train.len() as f64,
            val_f1: choice.f1,
        };
        log::debug!(
            "epoch {} loss {:.6} val_f1 {:.4}",
            record.epoch,
            record.train_loss,
            record.val_f1
        );
        curve.push(record);
    }

    let scores = score_samples(&model, &loss, val)?;
    let threshold = select_threshold(&scores, &val_labels)?.threshold;
    Ok(Fitted {
        model,
        loss,
        threshold,
        curve,
    })
}

/// Scores `samples` and applies the fitted threshold.
pub fn evaluate(fitted: &Fitted, samples: &[SiteSample]) -> Result<MetricsReport, TrainError> {
    let scores = score_samples(&fitted.model, &fitted.loss, samples)?;
    Ok(classify_report(&scores, &labels_of(samples), fitted.threshold)?)
}

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub fitted: Fitted,
    pub test: MetricsReport,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub auc: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: usize,
    /// Trials whose test split held both classes, so AUC was defined.
    pub auc_trials: usize,
    pub mean: MetricSummary,
    /// Sample standard deviation; 0 for a single trial.
    pub std: MetricSummary,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate(results: &[TrialResult]) -> Aggregate {
    let pick = |f: fn(&MetricsReport) -> Option<f64>| -> (f64, f64) {
        let v: Vec<f64> = results.iter().filter_map(|r| f(&r.test)).collect();
        mean_std(&v)
    };
    let auc = pick(|r| r.auc);
    let f1 = pick(|r| Some(r.f1));
    let precision = pick(|r| Some(r.precision));
    let recall = pick(|r| Some(r.recall));
    Aggregate {
        trials: results.len(),
        auc_trials: results.iter().filter(|r| r.test.auc.is_some()).count(),
        mean: MetricSummary {
            auc: auc.0,
            f1: f1.0,
            precision: precision.0,
            recall: recall.0,
        },
        std: MetricSummary {
            auc: auc.1,
            f1: f1.1,
            precision: precision.1,
            recall: recall.1,
        },
    }
}

/// One fit on train/val followed by scoring of the test split.
pub fn run_trial(
    trial: usize,
    seed: u64,
    splits: &Splits,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
) -> Result<TrialResult, TrainError> {
    let run = || -> Result<TrialResult, TrainError> {
        let fitted = fit(&splits.train, &splits.val, model_cfg, cfg, loss_cfg, seed)?;
        let test = evaluate(&fitted, &splits.test)?;
        Ok(TrialResult {
            trial,
            seed,
            fitted,
            test,
        })
    };
    run().map_err(|e| TrainError::Trial {
        trial,
        source: Box::new(e),
    })
}

/// `cfg.trials` independent runs seeded `seed + i`. Runs may execute in
/// parallel; results come back in trial order.
pub fn run_trials(
    splits: &Splits,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    seed: u64,
) -> Result<(Vec<TrialResult>, Aggregate), TrainError> {
    cfg.validate()?;
    let results: Vec<TrialResult> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| run_trial(i, seed.wrapping_add(i as u64), splits, model_cfg, cfg, loss_cfg))
        .collect::<Result<_, _>>()?;
    let agg = aggregate(&results);
    Ok((results, agg))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LeakageAudit {
    pub passed: bool,
    pub poisoned_labels: usize,
}

/// Runs one trial twice, once with every test label flipped, and checks that
/// parameters, threshold and learning curve are bit-identical.
pub fn leakage_audit(
    splits: &Splits,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    seed: u64,
) -> Result<LeakageAudit, TrainError> {
    let honest = run_trial(0, seed, splits, model_cfg, cfg, loss_cfg)?;
    let mut poisoned = splits.clone();
    for s in &mut poisoned.test {
        s.label = 1 - s.label.min(1);
    }
    let audited = run_trial(0, seed, &poisoned, model_cfg, cfg, loss_cfg)?;
    let same = |a: &Fitted, b: &Fitted| {
        a.threshold.to_bits() == b.threshold.to_bits()
            && a.model == b.model
            && a.loss == b.loss
            && a.curve.len() == b.curve.len()
            && a.curve.iter().zip(&b.curve).all(|(x, y)| {
                x.train_loss.to_bits() == y.train_loss.to_bits() && x.val_f1.to_bits() == y.val_f1.to_bits()
            })
    };
    Ok(LeakageAudit {
        passed: same(&honest.fitted, &audited.fitted),
        poisoned_labels: poisoned.test.len(),
    })
}
