use crate::metrics::{is_mutated, Confusion};

use super::TrainError;

/// Chosen decision threshold and the F1 it achieves on the scores it was
/// fitted to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

/// Picks τ maximizing F1 of "score > τ ⇒ mutated" over the midpoints of
/// consecutive distinct scores plus `min − 1` and `max + 1`. Ties go to the
/// larger τ. With a single class present, falls back to the largest normal
/// score (or `min − 1` when every sample is mutated).
pub fn select_threshold(scores: &[f64], labels: &[u8]) -> Result<ThresholdChoice, TrainError> {
    if scores.is_empty() {
        return Err(TrainError::Contract("threshold selection needs scores".into()));
    }
    if scores.len() != labels.len() {
        return Err(TrainError::Contract(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(TrainError::Contract("non-finite score in threshold selection".into()));
    }
    let mutated = labels.iter().filter(|&&l| is_mutated(l)).count();
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    if mutated == 0 || mutated == labels.len() {
        let threshold = if mutated == 0 {
            log::warn!("validation holds no mutated samples; threshold set to the largest normal score");
            scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        } else {
            log::warn!("validation holds no normal samples; threshold set below every score");
            min - 1.0
        };
        let confusion = Confusion::count(scores, labels, threshold);
        return Ok(ThresholdChoice {
            threshold,
            f1: confusion.f1(),
            confusion,
        });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Distinct scores ascending with per-value class counts.
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for &i in &order {
        let pos = usize::from(is_mutated(labels[i]));
        match groups.last_mut() {
            Some(g) if g.0 == scores[i] => {
                g.1 += pos;
                g.2 += 1 - pos;
            }
            _ => groups.push((scores[i], pos, 1 - pos)),
        }
    }

    let total_neg = labels.len() - mutated;
    // Candidate j predicts mutated for groups[j..]; suffix counts give tp/fp.
    let (mut tp, mut fp) = (mutated, total_neg);
    let mut best: Option<(usize, usize, usize, f64)> = None;
    for j in 0..=groups.len() {
        let tau = if j == 0 {
            groups[0].0 - 1.0
        } else if j == groups.len() {
            groups[j - 1].0 + 1.0
        } else {
            groups[j - 1].0 + (groups[j].0 - groups[j - 1].0) / 2.0
        };
        if j > 0 {
            tp -= groups[j - 1].1;
            fp -= groups[j - 1].2;
        }
        let fn_ = mutated - tp;
        let better = match best {
            None => true,
            // 2tp/(2tp+fp+fn) compared exactly; `>=` hands ties to larger τ.
            Some((btp, bfp, bfn, _)) => {
                let lhs = (2 * tp) as u128 * (2 * btp + bfp + bfn) as u128;
                let rhs = (2 * btp) as u128 * (2 * tp + fp + fn_) as u128;
                lhs >= rhs
            }
        };
        if better {
            best = Some((tp, fp, fn_, tau));
        }
    }
    let (tp, fp, fn_, threshold) = best.expect("at least two candidates");
    let confusion = Confusion {
        tp,
        fp,
        tn: total_neg - fp,
        fn_,
    };
    Ok(ThresholdChoice {
        threshold,
        f1: confusion.f1(),
        confusion,
    })
}
