use serde::{Deserialize, Serialize};

use super::kmeans::{sq_dist, Cluster};
use super::DatasetError;

/// The clustering of one cohort.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusteredStep {
    pub time_index: i64,
    pub clusters: Vec<Cluster>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainLink {
    pub time_index: i64,
    pub cluster_id: usize,
    /// Cohort-local record indices.
    pub members: Vec<usize>,
}

/// A path of nearest clusters over consecutive time steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterChain {
    pub id: usize,
    pub links: Vec<ChainLink>,
}

/// For every cluster at time `t`, the position in `next` of the cluster whose
/// centroid is nearest in Euclidean distance. Ties go to the lowest id.
pub fn link_clusters(current: &[Cluster], next: &[Cluster]) -> Result<Vec<usize>, DatasetError> {
    if current.is_empty() || next.is_empty() {
        return Err(DatasetError::Contract("cannot link an empty clustering".into()));
    }
    Ok(current
        .iter()
        .map(|c| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, n) in next.iter().enumerate() {
                let d = sq_dist(&c.centroid, &n.centroid);
                if d < best_d || (d == best_d && n.id < next[best].id) {
                    best = j;
                    best_d = d;
                }
            }
            best
        })
        .collect())
}

/// Follows links forward from every cluster of the first step. `links[i]`
/// maps `steps[i]` into `steps[i + 1]`.
pub fn build_chains(steps: &[ClusteredStep], links: &[Vec<usize>]) -> Result<Vec<ClusterChain>, DatasetError> {
    let first = steps
        .first()
        .ok_or_else(|| DatasetError::Contract("no time steps to chain".into()))?;
    if links.len() + 1 != steps.len() {
        return Err(DatasetError::Contract(format!(
            "{} link maps for {} time steps",
            links.len(),
            steps.len()
        )));
    }
    for w in steps.windows(2) {
        if w[1].time_index != w[0].time_index + 1 {
            return Err(DatasetError::Gap {
                missing: w[0].time_index + 1,
                before: w[0].time_index,
                after: w[1].time_index,
            });
        }
    }
    for (i, map) in links.iter().enumerate() {
        if map.len() != steps[i].clusters.len() || map.iter().any(|&j| j >= steps[i + 1].clusters.len()) {
            return Err(DatasetError::Contract(format!(
                "link map {i} does not fit its clusterings"
            )));
        }
    }

    Ok((0..first.clusters.len())
        .map(|start| {
            let mut at = start;
            let links = steps
                .iter()
                .enumerate()
                .map(|(s, step)| {
                    if s > 0 {
                        at = links[s - 1][at];
                    }
                    let c = &step.clusters[at];
                    ChainLink {
                        time_index: step.time_index,
                        cluster_id: c.id,
                        members: c.members.clone(),
                    }
                })
                .collect();
            ClusterChain { id: start, links }
        })
        .collect())
}
