use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kmeans::{cluster_cohort, KMeansParams};
use super::sanitize::sanitize_cohorts;
use super::{
    build_chains, link_clusters, sample_time_series, ClusteredStep, DatasetError, SiteSample,
    TimeCohort,
};
use crate::embedding::{record_vector, TrigramTable};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetParams {
    /// Input steps per sample; each chain spans `window + 1` cohorts.
    pub window: usize,
    /// 0-based sites to sample.
    pub positions: Vec<usize>,
    /// Record paths drawn per chain. `None` picks enough to reach the
    /// per-window cap of `cap` samples when every cohort yields `k` clusters.
    #[serde(default)]
    pub draws: Option<usize>,
    #[serde(default)]
    pub kmeans: KMeansParams,
}

impl DatasetParams {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.window == 0 {
            return Err(DatasetError::Contract("window T must be at least 1".into()));
        }
        if self.positions.is_empty() {
            return Err(DatasetError::Contract("no sites configured".into()));
        }
        if self.kmeans.k == 0 {
            return Err(DatasetError::Contract("k must be at least 1".into()));
        }
        if self.draws == Some(0) {
            return Err(DatasetError::Contract("draws must be positive".into()));
        }
        Ok(())
    }

    pub fn draws_for_cap(&self, cap: usize) -> usize {
        self.draws.unwrap_or_else(|| {
            let per_draw = self.kmeans.k * self.positions.len();
            cap.div_ceil(per_draw).max(1)
        })
    }
}

/// All samples whose chains end at one time index, in stable order
/// (draw, then chain, then position).
#[derive(Clone, Debug, PartialEq)]
pub struct SampleGroup {
    pub label_time: i64,
    pub samples: Vec<SiteSample>,
}

/// Runs sanitize → embed → cluster → link → chain → sample over a corpus.
/// Each chain draws from its own sub-stream, so the result does not depend on
/// the parallel schedule.
pub fn build_samples(
    cohorts: &[TimeCohort],
    params: &DatasetParams,
    cap: usize,
    table: &TrigramTable,
    seed: u64,
) -> Result<Vec<SampleGroup>, DatasetError> {
    params.validate()?;
    if cohorts.is_empty() {
        return Err(DatasetError::NoRecords);
    }
    let span = params.window + 1;
    if cohorts.len() < span {
        return Err(DatasetError::Contract(format!(
            "{} cohorts cannot fill a window of {} steps",
            cohorts.len(),
            span
        )));
    }
    let cohorts = sanitize_cohorts(cohorts, seed)?;

    let steps = cohorts
        .par_iter()
        .map(|c| {
            let vectors = c
                .records
                .iter()
                .map(|r| record_vector(r.residues(), table))
                .collect::<Result<Vec<_>, _>>()?;
            let mut r = rng::substream(seed, rng::KMEANS_INIT, &[c.time_index as u64]);
            let res = cluster_cohort(&vectors, &params.kmeans, &mut r)?;
            Ok(ClusteredStep {
                time_index: c.time_index,
                clusters: res.clusters,
            })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;

    let links = steps
        .windows(2)
        .map(|w| link_clusters(&w[0].clusters, &w[1].clusters))
        .collect::<Result<Vec<_>, _>>()?;

    let draws = params.draws_for_cap(cap);
    (0..=steps.len() - span)
        .into_par_iter()
        .map(|start| {
            let window_steps = &steps[start..start + span];
            let chains = build_chains(window_steps, &links[start..start + span - 1])?;
            let window_cohorts: Vec<&TimeCohort> = cohorts[start..start + span].iter().collect();
            let label_time = window_steps[span - 1].time_index;
            let mut per_chain = Vec::with_capacity(chains.len());
            for chain in &chains {
                let mut r = rng::substream(
                    seed,
                    rng::CHAIN_DRAWS,
                    &[label_time as u64, chain.id as u64],
                );
                per_chain.push(sample_time_series(
                    chain,
                    &window_cohorts,
                    &params.positions,
                    draws,
                    &mut r,
                    table,
                )?);
            }
            // Interleave draw by draw so every prefix of the group covers
            // every chain.
            let per_draw = params.positions.len();
            let mut samples = Vec::with_capacity(per_chain.iter().map(Vec::len).sum());
            for d in 0..draws {
                for chain_samples in &per_chain {
                    samples.extend_from_slice(&chain_samples[d * per_draw..(d + 1) * per_draw]);
                }
            }
            info!(
                "window ending {label_time}: {} chains, {} samples",
                chains.len(),
                samples.len()
            );
            Ok(SampleGroup { label_time, samples })
        })
        .collect()
}
