//! Synthetic corpus with planted, learnable mutations.
//!
//! Each lineage draws residues from its own slice of the alphabet (never `W`
//! or `C`), starting from a random sequence. Tracked sites sit every `spacing` residues. Between consecutive
//! time steps each (lineage, site) mutates with probability `rate`, and in the
//! step before a mutation the two flanking residues of the site are set to
//! `W` and `C` in every member of the lineage. Members of a lineage differ
//! only by occasional substitutions two residues away from tracked sites, so
//! clustering recovers the lineages while site inputs vary between records.
//!
//! The emitted trigram table maps each lineage's trigrams near one pattern
//! vector per lineage and motif trigrams near a separate pattern.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::SequenceRecord;
use crate::rng::{substream, SYNTH};

const BACKGROUND: &[u8] = b"ADEFGHIKLMNPQRSTVY";
const MOTIF: (u8, u8) = (b'W', b'C');

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    pub cohorts: usize,
    /// Records per cohort, spread evenly over lineages.
    pub size: usize,
    pub length: usize,
    pub rate: f64,
    pub lineages: usize,
    /// Distance between tracked sites; the first sits at `spacing - 1`.
    pub spacing: usize,
    /// Per-record probability of a substitution next to each tracked site.
    pub noise: f64,
    pub first_time: i64,
    /// Dimension of the emitted trigram table.
    pub embedding_dim: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            cohorts: 10,
            size: 20,
            length: 50,
            rate: 0.1,
            lineages: 3,
            spacing: 5,
            noise: 0.2,
            first_time: 2000,
            embedding_dim: 100,
            seed: 20240601,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.rate) || !(0.0..=1.0).contains(&self.noise) {
            return Err("rate and noise must lie in [0, 1]".into());
        }
        if self.cohorts < 2 || self.lineages == 0 || self.size < self.lineages {
            return Err("need at least 2 cohorts and one record per lineage".into());
        }
        if self.lineages > MAX_LINEAGES {
            return Err(format!("at most {MAX_LINEAGES} lineages are supported"));
        }
        if self.embedding_dim == 0 {
            return Err("embedding_dim must be positive".into());
        }
        if self.spacing < 5 {
            return Err("spacing must be at least 5 so site neighborhoods do not overlap".into());
        }
        if self.tracked_positions().is_empty() {
            return Err(format!("length {} leaves no room for tracked sites", self.length));
        }
        Ok(())
    }

    /// Tracked sites: every `spacing` residues, keeping two residues of
    /// context on each side.
    pub fn tracked_positions(&self) -> Vec<usize> {
        (self.spacing.saturating_sub(1)..self.length.saturating_sub(2))
            .step_by(self.spacing.max(1))
            .filter(|&p| p >= 2)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedMutation {
    pub lineage: usize,
    /// Time index after the change.
    pub time_index: i64,
    pub position: usize,
    pub from: char,
    pub to: char,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub params: SynthParams,
    pub positions: Vec<usize>,
    /// (lineage, transition, site) triples at risk of mutating.
    pub sites: usize,
    pub mutations: Vec<PlantedMutation>,
}

impl GroundTruth {
    /// Planted mutations whose post-change time is `t`.
    pub fn count_at(&self, t: i64) -> usize {
        self.mutations.iter().filter(|m| m.time_index == t).count()
    }
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub records: Vec<SequenceRecord>,
    pub truth: GroundTruth,
    /// TSV trigram table covering every trigram in `records`.
    pub table_tsv: String,
}

/// Pattern vector entries are uniform on `±PATTERN_SCALE`.
const PATTERN_SCALE: f64 = 3.0;
/// Spread of table entries around their pattern vector.
const PATTERN_JITTER: f64 = 0.05;

/// Trigrams containing `W` or `C` sit near a motif pattern vector; all other
/// trigrams sit near the pattern of the lineage whose alphabet they use. Site
/// inputs of normal and about-to-mutate sites thus occupy separate regions.
fn table_tsv(records: &[SequenceRecord], lineages: usize, dim: usize, rng: &mut impl Rng) -> String {
    let mut pattern = || -> Vec<f64> { (0..dim).map(|_| rng.random_range(-PATTERN_SCALE..PATTERN_SCALE)).collect() };
    let motif = pattern();
    let families: Vec<Vec<f64>> = (0..lineages).map(|_| pattern()).collect();
    let trigrams: std::collections::BTreeSet<&[u8]> =
        records.iter().flat_map(|r| r.residues().windows(3)).collect();
    let mut out = String::new();
    for tri in trigrams {
        let base = if tri.iter().any(|&b| b == MOTIF.0 || b == MOTIF.1) {
            &motif
        } else {
            let i = BACKGROUND.iter().position(|&b| b == tri[0]).expect("background residue");
            &families[i % lineages]
        };
        out.push_str(std::str::from_utf8(tri).expect("ascii residues"));
        for v in base {
            let jitter = rng.random_range(-PATTERN_JITTER..PATTERN_JITTER);
            out.push_str(&format!("\t{:.4}", v + jitter));
        }
        out.push('\n');
    }
    out
}

const MAX_LINEAGES: usize = 9;

fn lineage_alphabet(lineage: usize, lineages: usize) -> Vec<u8> {
    BACKGROUND
        .iter()
        .enumerate()
        .filter(|(i, _)| i % lineages == lineage)
        .map(|(_, &b)| b)
        .collect()
}

fn other_residue(current: u8, alphabet: &[u8], rng: &mut impl Rng) -> u8 {
    loop {
        let r = *alphabet.choose(rng).expect("nonempty alphabet");
        if r != current {
            return r;
        }
    }
}

pub fn generate(params: &SynthParams) -> Result<SynthCorpus, String> {
    params.validate()?;
    let mut rng = substream(params.seed, SYNTH, &[]);
    let positions = params.tracked_positions();

    let alphabets: Vec<Vec<u8>> = (0..params.lineages)
        .map(|l| lineage_alphabet(l, params.lineages))
        .collect();
    let mut lineages: Vec<Vec<u8>> = alphabets
        .iter()
        .map(|alpha| {
            (0..params.length)
                .map(|_| *alpha.choose(&mut rng).expect("nonempty alphabet"))
                .collect()
        })
        .collect();

    // mutates[t][l][k]: site k of lineage l changes between step t and t + 1.
    let mut mutates = vec![vec![vec![false; positions.len()]; params.lineages]; params.cohorts];
    for step in mutates.iter_mut().take(params.cohorts - 1) {
        for lineage in step.iter_mut() {
            for flag in lineage.iter_mut() {
                *flag = rng.random_bool(params.rate);
            }
        }
    }

    let mut records = Vec::with_capacity(params.cohorts * params.size);
    let mut mutations = Vec::new();
    for (t, flags) in mutates.iter().enumerate() {
        let time = params.first_time + t as i64;
        for member in 0..params.size {
            let l = member % params.lineages;
            let mut seq = lineages[l].clone();
            for (k, &p) in positions.iter().enumerate() {
                if flags[l][k] {
                    seq[p - 1] = MOTIF.0;
                    seq[p + 1] = MOTIF.1;
                }
                for q in [p - 2, p + 2] {
                    if rng.random_bool(params.noise) {
                        seq[q] = other_residue(seq[q], &alphabets[l], &mut rng);
                    }
                }
            }
            records.push(SequenceRecord::new(
                format!("L{l}_t{time}_m{member}"),
                time,
                seq,
            ));
        }
        if t + 1 < params.cohorts {
            for (l, base) in lineages.iter_mut().enumerate() {
                for (k, &p) in positions.iter().enumerate() {
                    if flags[l][k] {
                        let to = other_residue(base[p], &alphabets[l], &mut rng);
                        mutations.push(PlantedMutation {
                            lineage: l,
                            time_index: time + 1,
                            position: p,
                            from: base[p] as char,
                            to: to as char,
                        });
                        base[p] = to;
                    }
                }
            }
        }
    }

    let table_tsv = table_tsv(&records, params.lineages, params.embedding_dim, &mut rng);
    let truth = GroundTruth {
        params: params.clone(),
        sites: params.lineages * (params.cohorts - 1) * positions.len(),
        positions,
        mutations,
    };
    Ok(SynthCorpus {
        records,
        truth,
        table_tsv,
    })
}

/// `id,time_index,sequence` CSV text.
pub fn corpus_csv(records: &[SequenceRecord]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "time_index", "sequence"])?;
    for r in records {
        w.write_record([r.id.as_str(), &r.time_index.to_string(), r.as_str()])?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}
