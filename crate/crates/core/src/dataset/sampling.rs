use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ClusterChain, DatasetError, TimeCohort};
use crate::embedding::{embed_site, TrigramTable};

/// Where a sample came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Time index of the chain's last (label) step.
    pub label_time: i64,
    pub chain: usize,
    pub draw: usize,
}

/// One labeled example: `T` site representations and whether the site kept
/// its residue into the next step (`1`, normal) or changed (`0`, mutated).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteSample {
    pub position: usize,
    pub label: u8,
    pub provenance: Provenance,
    pub inputs: Vec<Vec<f64>>,
}

impl SiteSample {
    pub fn window(&self) -> usize {
        self.inputs.len()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn is_normal(&self) -> bool {
        self.label == 1
    }
}

/// Draws `draws` record paths along `chain` (one record per link) and emits
/// one sample per draw and position, draw-major.
///
/// `cohorts[i]` must be the cohort of `chain.links[i]`. Inputs come from the
/// first `T = links - 1` links; the label compares the residue at the last
/// link with the one before it.
pub fn sample_time_series<R: Rng + ?Sized>(
    chain: &ClusterChain,
    cohorts: &[&TimeCohort],
    positions: &[usize],
    draws: usize,
    rng: &mut R,
    table: &TrigramTable,
) -> Result<Vec<SiteSample>, DatasetError> {
    let n_links = chain.links.len();
    if n_links < 2 {
        return Err(DatasetError::Sampling(format!(
            "chain {} has {n_links} links; at least 2 are needed",
            chain.id
        )));
    }
    if cohorts.len() != n_links {
        return Err(DatasetError::Contract(format!(
            "{} cohorts for a chain of {n_links} links",
            cohorts.len()
        )));
    }
    for (link, cohort) in chain.links.iter().zip(cohorts) {
        if link.time_index != cohort.time_index {
            return Err(DatasetError::Contract(format!(
                "link at time {} paired with cohort {}",
                link.time_index, cohort.time_index
            )));
        }
        if link.members.is_empty() {
            return Err(DatasetError::Sampling(format!(
                "chain {} has an empty cluster at time {}",
                chain.id, link.time_index
            )));
        }
        if link.members.iter().any(|&m| m >= cohort.records.len()) {
            return Err(DatasetError::Contract(format!(
                "cluster member out of range at time {}",
                link.time_index
            )));
        }
    }

    let label_time = chain.links[n_links - 1].time_index;
    let mut out = Vec::with_capacity(draws * positions.len());
    for draw in 0..draws {
        let picks: Vec<&[u8]> = chain
            .links
            .iter()
            .zip(cohorts)
            .map(|(link, cohort)| {
                let m = link.members[rng.random_range(0..link.members.len())];
                cohort.records[m].residues()
            })
            .collect();
        let (last, prior) = (picks[n_links - 1], picks[n_links - 2]);
        for &p in positions {
            let inputs = picks[..n_links - 1]
                .iter()
                .map(|seq| embed_site(seq, p, table))
                .collect::<Result<Vec<_>, _>>()?;
            out.push(SiteSample {
                position: p,
                label: u8::from(last[p] == prior[p]),
                provenance: Provenance {
                    label_time,
                    chain: chain.id,
                    draw,
                },
                inputs,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ChainLink, SequenceRecord};
    use crate::rng;

    fn cohort(t: i64, seqs: &[&str]) -> TimeCohort {
        TimeCohort {
            time_index: t,
            records: seqs
                .iter()
                .enumerate()
                .map(|(i, s)| SequenceRecord::new(format!("r{t}_{i}"), t, s.as_bytes().to_vec()))
                .collect(),
        }
    }

    fn chain_over(cohorts: &[TimeCohort]) -> ClusterChain {
        ClusterChain {
            id: 0,
            links: cohorts
                .iter()
                .map(|c| ChainLink {
                    time_index: c.time_index,
                    cluster_id: 0,
                    members: (0..c.records.len()).collect(),
                })
                .collect(),
        }
    }

    const BASE: &str = "MKAILVVLLYTFATANADTLCIGYHANNST";

    #[test]
    fn identical_sequences_are_all_normal() {
        let cohorts: Vec<_> = (0..4).map(|t| cohort(t, &[BASE, BASE])).collect();
        let refs: Vec<&TimeCohort> = cohorts.iter().collect();
        let table = TrigramTable::fallback_only(4, 0);
        let positions: Vec<usize> = (2..=27).collect();
        let out = sample_time_series(&chain_over(&cohorts), &refs, &positions, 3, &mut rng::substream(0, "t", &[]), &table).unwrap();
        assert_eq!(out.len(), 3 * positions.len());
        assert!(out.iter().all(|s| s.label == 1 && s.window() == 3 && s.dim() == 4));
    }

    #[test]
    fn single_changed_site_is_the_only_mutation() {
        let mut changed = BASE.as_bytes().to_vec();
        changed[7] = if changed[7] == b'W' { b'C' } else { b'W' };
        let changed = String::from_utf8(changed).unwrap();
        let cohorts = vec![cohort(0, &[BASE]), cohort(1, &[BASE]), cohort(2, &[&changed])];
        let refs: Vec<&TimeCohort> = cohorts.iter().collect();
        let table = TrigramTable::fallback_only(4, 0);
        let positions: Vec<usize> = (2..=27).collect();
        let out = sample_time_series(&chain_over(&cohorts), &refs, &positions, 1, &mut rng::substream(0, "t", &[]), &table).unwrap();
        for s in &out {
            assert_eq!(s.label, u8::from(s.position != 7), "position {}", s.position);
        }
    }

    #[test]
    fn empty_cluster_is_a_sampling_error() {
        let cohorts = vec![cohort(0, &[BASE]), cohort(1, &[BASE])];
        let refs: Vec<&TimeCohort> = cohorts.iter().collect();
        let mut chain = chain_over(&cohorts);
        chain.links[1].members.clear();
        let table = TrigramTable::fallback_only(4, 0);
        let err = sample_time_series(&chain, &refs, &[5], 1, &mut rng::substream(0, "t", &[]), &table).unwrap_err();
        assert!(matches!(err, DatasetError::Sampling(_)));
    }

    #[test]
    fn boundary_positions_surface_embedding_errors() {
        let cohorts = vec![cohort(0, &[BASE]), cohort(1, &[BASE])];
        let refs: Vec<&TimeCohort> = cohorts.iter().collect();
        let table = TrigramTable::fallback_only(4, 0);
        let err = sample_time_series(&chain_over(&cohorts), &refs, &[1], 1, &mut rng::substream(0, "t", &[]), &table).unwrap_err();
        assert!(matches!(err, DatasetError::Embedding(_)));
    }
}
