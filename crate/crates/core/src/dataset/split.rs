use log::warn;
use serde::{Deserialize, Serialize};

use super::{DatasetError, SampleGroup, SiteSample};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction_of_train: f64,
    pub per_cohort_cap: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            val_fraction_of_train: 0.1,
            per_cohort_cap: 1000,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let ok = |f: f64| f > 0.0 && f < 1.0;
        if !ok(self.train_fraction) || !ok(self.val_fraction_of_train) || self.per_cohort_cap == 0 {
            return Err(DatasetError::Contract(format!("invalid split spec {self:?}")));
        }
        Ok(())
    }
}

/// Sizes of the three splits of one group, in file order: validation first,
/// then training, then test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

fn floor_frac(n: usize, f: f64) -> usize {
    // 1e-9 guards products like 0.29 * 100 that land just under an integer
    (n as f64 * f + 1e-9).floor() as usize
}

/// Split sizes for a group of `n` samples: cap, floor of the training
/// fraction for the pool, floor of the validation fraction of the pool. Each
/// split gets at least one sample when the group is large enough to allow it.
pub fn split_counts(n: usize, spec: &SplitSpec) -> Result<SplitCounts, DatasetError> {
    spec.validate()?;
    if n == 0 {
        return Err(DatasetError::Contract("cannot split an empty group".into()));
    }
    let n = n.min(spec.per_cohort_cap);
    if n < 10 {
        warn!("group of {n} samples is smaller than 10; using floor-based split sizes");
    }
    let mut pool = floor_frac(n, spec.train_fraction);
    if pool == n && n >= 2 {
        pool -= 1;
    }
    let test = n - pool;
    let mut val = floor_frac(pool, spec.val_fraction_of_train);
    if val == 0 && pool >= 2 {
        val = 1;
    }
    Ok(SplitCounts {
        train: pool - val,
        val,
        test,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<SiteSample>,
    pub val: Vec<SiteSample>,
    pub test: Vec<SiteSample>,
}

/// Splits every group by its stable order and concatenates the parts.
pub fn split_dataset(groups: &[SampleGroup], spec: &SplitSpec) -> Result<(Splits, Vec<SplitCounts>), DatasetError> {
    if groups.iter().all(|g| g.samples.is_empty()) {
        return Err(DatasetError::Contract("no samples to split".into()));
    }
    let mut out = Splits::default();
    let mut counts = Vec::with_capacity(groups.len());
    for g in groups {
        let c = split_counts(g.samples.len(), spec)?;
        let s = &g.samples;
        out.val.extend_from_slice(&s[..c.val]);
        out.train.extend_from_slice(&s[c.val..c.val + c.train]);
        out.test.extend_from_slice(&s[c.val + c.train..c.total()]);
        counts.push(c);
    }
    Ok((out, counts))
}
