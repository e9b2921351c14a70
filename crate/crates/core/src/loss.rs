//! Hypersphere-classifier and DeepSAD objectives plus the matching anomaly
//! score. Label convention: `1` = normal (unmutated), `0` = anomalous.

use serde::{Deserialize, Serialize};

use crate::numcore::{NumError, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    Hsc,
    Deepsad,
}

impl std::str::FromStr for LossMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hsc" => Ok(LossMode::Hsc),
            "deepsad" => Ok(LossMode::Deepsad),
            other => Err(format!("unknown loss {other:?}, expected hsc or deepsad")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub mode: LossMode,
    /// DeepSAD center; filled in before training when absent.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    pub eta: f64,
    pub lambda: f64,
    pub eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            mode: LossMode::Hsc,
            center: None,
            eta: 1.0,
            lambda: 1e-6,
            eps: 1e-6,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), NumError> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(NumError::Contract(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(NumError::Contract(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if !(self.eps > 0.0 && self.eps <= 1e-2) {
            return Err(NumError::Contract(format!("eps must lie in (0, 1e-2], got {}", self.eps)));
        }
        if let Some(c) = &self.center {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(NumError::NonFinite("loss center"));
            }
        }
        Ok(())
    }

    fn center(&self) -> Result<&[f64], NumError> {
        self.center
            .as_deref()
            .ok_or_else(|| NumError::Contract("deepsad loss requires a center".into()))
    }
}

fn label_columns(tape: &mut Tape, labels: &[u8], rows: usize) -> Result<(Var, Var), NumError> {
    if labels.len() != rows {
        return Err(NumError::Contract(format!(
            "{} labels for a batch of {rows}",
            labels.len()
        )));
    }
    if rows == 0 {
        return Err(NumError::Contract("empty batch".into()));
    }
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l.min(1))).collect();
    let not_y: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
    let y = tape.constant(Tensor::from_vec(rows, 1, y)?);
    let not_y = tape.constant(Tensor::from_vec(rows, 1, not_y)?);
    Ok((y, not_y))
}

/// Mean over the batch of `y‖φ‖² − (1−y)·log(clamp(1 − exp(−(sqrt(‖φ‖²+1) − 1)), ε, 1))`.
pub fn hsc_loss(tape: &mut Tape, phi: Var, labels: &[u8], cfg: &LossConfig) -> Result<Var, NumError> {
    let rows = tape.value(phi).rows();
    let (y, not_y) = label_columns(tape, labels, rows)?;
    let sq = tape.sq_norm_rows(phi)?;
    let normal = tape.mul(y, sq)?;

    let shifted = tape.add_scalar(sq, 1.0)?;
    let radial = tape.sqrt(shifted)?;
    let radial = tape.add_scalar(radial, -1.0)?;
    let neg = tape.scale(radial, -1.0)?;
    let decay = tape.exp(neg)?;
    let decay = tape.scale(decay, -1.0)?;
    let gap = tape.add_scalar(decay, 1.0)?;
    let gap = tape.clamp(gap, cfg.eps, 1.0)?;
    let log_gap = tape.log(gap)?;
    let anomalous = tape.mul(not_y, log_gap)?;

    let per_sample = tape.sub(normal, anomalous)?;
    tape.mean(per_sample)
}

/// `(1/(n+m))·Σ_normal ‖φ−c‖² + (η/(n+m))·Σ_anomalous 1/max(‖φ−c‖², ε) + (λ/2)·Σ ‖θ‖²`.
pub fn deepsad_loss(
    tape: &mut Tape,
    phi: Var,
    labels: &[u8],
    params: &[Var],
    cfg: &LossConfig,
) -> Result<Var, NumError> {
    let center = cfg.center()?;
    let [rows, cols] = tape.value(phi).shape();
    if center.len() != cols {
        return Err(NumError::Shape {
            op: "deepsad_loss",
            left: [rows, cols],
            right: [1, center.len()],
        });
    }
    let (y, not_y) = label_columns(tape, labels, rows)?;
    let neg_c = tape.constant(Tensor::row(&center.iter().map(|v| -v).collect::<Vec<_>>()));
    let diff = tape.add_row(phi, neg_c)?;
    let dist = tape.sq_norm_rows(diff)?;
    let normal = tape.mul(y, dist)?;
    let floored = tape.clamp(dist, cfg.eps, f64::INFINITY)?;
    let inv = tape.recip(floored)?;
    let anomalous = tape.mul(not_y, inv)?;
    let anomalous = tape.scale(anomalous, cfg.eta)?;
    let per_sample = tape.add(normal, anomalous)?;
    let data_term = tape.mean(per_sample)?;
    if cfg.lambda == 0.0 || params.is_empty() {
        return Ok(data_term);
    }
    let mut decay = None;
    for &p in params {
        let n = tape.sq_norm(p)?;
        decay = Some(match decay {
            None => n,
            Some(acc) => tape.add(acc, n)?,
        });
    }
    let decay = tape.scale(decay.expect("nonempty params"), cfg.lambda / 2.0)?;
    tape.add(data_term, decay)
}

/// Dispatches on `cfg.mode`. `params` only matters for DeepSAD weight decay.
pub fn batch_loss(
    tape: &mut Tape,
    phi: Var,
    labels: &[u8],
    params: &[Var],
    cfg: &LossConfig,
) -> Result<Var, NumError> {
    match cfg.mode {
        LossMode::Hsc => hsc_loss(tape, phi, labels, cfg),
        LossMode::Deepsad => deepsad_loss(tape, phi, labels, params, cfg),
    }
}

/// Squared distance from the origin (HSC) or from the center (DeepSAD).
/// Larger means more likely mutated.
pub fn anomaly_score(phi: &[f64], cfg: &LossConfig) -> Result<f64, NumError> {
    match cfg.mode {
        LossMode::Hsc => Ok(phi.iter().map(|v| v * v).sum()),
        LossMode::Deepsad => {
            let c = cfg.center()?;
            if c.len() != phi.len() {
                return Err(NumError::Contract(format!(
                    "center has {} entries, output has {}",
                    c.len(),
                    phi.len()
                )));
            }
            Ok(phi.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum())
        }
    }
}

/// Mean of the normal projections, with near-zero coordinates pushed to
/// `±0.1`.
pub fn init_center(normal_outputs: &[Vec<f64>]) -> Result<Vec<f64>, NumError> {
    let first = normal_outputs
        .first()
        .ok_or_else(|| NumError::Contract("no normal samples to place the center".into()))?;
    let mut c = vec![0.0; first.len()];
    for phi in normal_outputs {
        for (acc, v) in c.iter_mut().zip(phi) {
            *acc += v;
        }
    }
    let n = normal_outputs.len() as f64;
    for v in &mut c {
        *v /= n;
        if v.abs() < 0.01 {
            *v = if *v < 0.0 { -0.1 } else { 0.1 };
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::grad_check_inputs;
    use proptest::prelude::*;

    fn eval(phi: &[Vec<f64>], labels: &[u8], cfg: &LossConfig) -> f64 {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::from_rows(phi).unwrap());
        let l = batch_loss(&mut tape, p, labels, &[], cfg).unwrap();
        tape.value(l).item().unwrap()
    }

    fn deepsad(center: Vec<f64>) -> LossConfig {
        LossConfig {
            mode: LossMode::Deepsad,
            center: Some(center),
            lambda: 0.0,
            ..LossConfig::default()
        }
    }

    #[test]
    fn hsc_examples() {
        let cfg = LossConfig::default();
        assert_eq!(eval(&[vec![0.0, 0.0]], &[1], &cfg), 0.0);
        let at_origin = eval(&[vec![0.0, 0.0]], &[0], &cfg);
        assert!((at_origin + cfg.eps.ln()).abs() < 1e-9, "{at_origin}");
        let v = eval(&[vec![1.0, 1.0, 1.0]], &[0], &cfg);
        let want = -(1.0 - (-1.0f64).exp()).ln();
        assert!((v - want).abs() < 1e-12);
        assert!((v - 0.4587).abs() < 1e-4);
    }

    #[test]
    fn deepsad_examples() {
        assert_eq!(eval(&[vec![1.0, 2.0]], &[1], &deepsad(vec![1.0, 2.0])), 0.0);
        let v = eval(&[vec![2.0, 0.0]], &[0], &deepsad(vec![0.0, 0.0]));
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn deepsad_requires_center() {
        let cfg = LossConfig {
            mode: LossMode::Deepsad,
            ..LossConfig::default()
        };
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::row(&[1.0]));
        assert!(deepsad_loss(&mut tape, p, &[1], &[], &cfg).is_err());
    }

    #[test]
    fn weight_decay_term() {
        let mut cfg = deepsad(vec![0.0]);
        cfg.lambda = 0.5;
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::row(&[0.0]));
        let w = tape.leaf(Tensor::row(&[1.0, 2.0]), true);
        let l = deepsad_loss(&mut tape, p, &[1], &[w], &cfg).unwrap();
        assert!((tape.value(l).item().unwrap() - 0.25 * 5.0).abs() < 1e-15);
    }

    #[test]
    fn anomaly_score_examples() {
        let cfg = LossConfig::default();
        assert_eq!(anomaly_score(&[3.0, 4.0], &cfg).unwrap(), 25.0);
        assert_eq!(anomaly_score(&[6.0, 8.0], &cfg).unwrap(), 100.0);
        assert_eq!(anomaly_score(&[1.0, 2.0], &deepsad(vec![1.0, 2.0])).unwrap(), 0.0);
    }

    #[test]
    fn center_pushes_small_coordinates() {
        let c = init_center(&[vec![0.001, 1.0, -0.004], vec![0.001, 3.0, 0.0]]).unwrap();
        assert_eq!(c, vec![0.1, 2.0, -0.1]);
        assert!(init_center(&[]).is_err());
    }

    #[test]
    fn mislabeled_batch_is_rejected() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::row(&[1.0]));
        assert!(hsc_loss(&mut tape, p, &[1, 0], &LossConfig::default()).is_err());
    }

    #[test]
    fn losses_pass_grad_check() {
        let phi = Tensor::from_rows(&[vec![0.3, -0.7], vec![1.1, 0.4], vec![-0.5, 0.9]]).unwrap();
        let labels = [1, 0, 0];
        let hsc = LossConfig::default();
        let err = grad_check_inputs(
            |t, v| hsc_loss(t, v[0], &labels, &hsc),
            std::slice::from_ref(&phi),
            1e-5,
            None,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
        let mut ds = deepsad(vec![0.2, 0.1]);
        ds.lambda = 0.01;
        let w = Tensor::row(&[0.5, -1.5]);
        let err = grad_check_inputs(
            |t, v| deepsad_loss(t, v[0], &labels, &[v[1]], &ds),
            &[phi, w],
            1e-5,
            None,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    proptest! {
        #[test]
        fn losses_are_non_negative(
            rows in proptest::collection::vec((proptest::collection::vec(-3.0f64..3.0, 3), 0u8..2), 1..12)
        ) {
            let phi: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
            let labels: Vec<u8> = rows.iter().map(|r| r.1).collect();
            prop_assert!(eval(&phi, &labels, &LossConfig::default()) >= 0.0);
            prop_assert!(eval(&phi, &labels, &deepsad(vec![0.1, -0.2, 0.3])) >= 0.0);
        }

        #[test]
        fn hsc_is_monotone_in_norm(r in 0.05f64..5.0, k in 1.01f64..3.0) {
            let cfg = LossConfig::default();
            let near = vec![r, 0.0];
            let far = vec![r * k, 0.0];
            prop_assert!(eval(std::slice::from_ref(&far), &[1], &cfg) > eval(std::slice::from_ref(&near), &[1], &cfg));
            prop_assert!(eval(&[far], &[0], &cfg) < eval(&[near], &[0], &cfg));
        }

        #[test]
        fn deepsad_without_anomalies_is_compactness(
            phi in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 2), 1..10)
        ) {
            let c = vec![0.3, -0.4];
            let labels = vec![1u8; phi.len()];
            let got = eval(&phi, &labels, &deepsad(c.clone()));
            let want: f64 = phi
                .iter()
                .map(|p| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2))
                .sum::<f64>()
                / phi.len() as f64;
            prop_assert!((got - want).abs() < 1e-12);
        }
    }
}
