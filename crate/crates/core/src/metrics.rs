//! ROC/AUC and thresholded classification metrics. The positive class is
//! "mutated", which is label `0`; a sample is predicted mutated when its
//! score is strictly greater than the threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no scores")]
    Empty,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("AUC is undefined: only {0} samples present")]
    SingleClass(&'static str),
}

/// Label value of the positive (mutated) class.
pub const MUTATED: u8 = 0;

pub fn is_mutated(label: u8) -> bool {
    label == MUTATED
}

fn check(scores: &[f64], labels: &[u8]) -> Result<(), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Samples scoring strictly above this value are predicted mutated.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Sweeps every distinct score from high to low, moving through tied scores
/// in one step, and integrates with the trapezoid rule.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<RocCurve, MetricsError> {
    check(scores, labels)?;
    let positives = labels.iter().filter(|&&l| is_mutated(l)).count();
    let negatives = labels.len() - positives;
    if positives == 0 {
        return Err(MetricsError::SingleClass("normal"));
    }
    if negatives == 0 {
        return Err(MetricsError::SingleClass("mutated"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (p, n) = (positives as f64, negatives as f64);
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if is_mutated(labels[order[i]]) {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *points.last().expect("nonempty");
        // Everything at or above `s` is now counted, so the cut sits just
        // below `s`: the next lower score, or below the minimum.
        let threshold = if i < order.len() { scores[order[i]] } else { f64::NEG_INFINITY };
        let pt = RocPoint {
            threshold,
            fpr: fp as f64 / n,
            tpr: tp as f64 / p,
        };
        auc += (pt.fpr - prev.fpr) * (pt.tpr + prev.tpr) / 2.0;
        points.push(pt);
    }
    Ok(RocCurve { points, auc })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn count(scores: &[f64], labels: &[u8], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&s, &l) in scores.iter().zip(labels) {
            match (s > threshold, is_mutated(l)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2tp / (2tp + fp + fn)`, which equals the harmonic mean of precision
    /// and recall whenever that is defined, and 0 otherwise.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Absent when the evaluated set holds only one class.
    pub auc: Option<f64>,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub threshold: f64,
    pub confusion: Confusion,
}

pub fn classify_report(scores: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsReport, MetricsError> {
    check(scores, labels)?;
    let confusion = Confusion::count(scores, labels, threshold);
    if confusion.tp + confusion.fp == 0 {
        log::debug!("no samples predicted mutated at threshold {threshold}; precision reported as 0");
    }
    let auc = match roc_auc(scores, labels) {
        Ok(curve) => Some(curve.auc),
        Err(MetricsError::SingleClass(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        auc,
        f1: confusion.f1(),
        precision: confusion.precision(),
        recall: confusion.recall(),
        threshold,
        confusion,
    })
}

/// `roc.csv` body: `threshold,fpr,tpr`.
pub fn roc_csv(curve: &RocCurve) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in &curve.points {
        w.serialize(p)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}
