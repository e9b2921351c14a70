//! Trigram vector tables and the per-position neighborhood representation.
//!
//! The vector for residue position `j` is the table vector of the trigram
//! centered at `j`, i.e. `residues[j-1..=j+1]`. The representation of site `p`
//! averages the vectors at `p-1`, `p` and `p+1`, so it reads residues
//! `p-2..=p+2` and is only defined for `2 <= p <= len-3`.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

/// The 20 canonical amino-acid letters.
pub const AMINO_ACIDS: &[u8; 20] = b"ACDEFGHIKLMNPQRSTVWY";

pub const DEFAULT_DIM: usize = 100;

const TRIGRAM_STREAM: &str = "trigram-fallback";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("line {line}: {detail}")]
    Format { line: usize, detail: String },
    #[error("line {line}: non-finite value {value:?}")]
    Value { line: usize, value: String },
    #[error("{0:?} is not a canonical amino acid")]
    NonCanonical(char),
    #[error("position {position} has no full trigram context in a sequence of length {length}")]
    Boundary { position: usize, length: usize },
    #[error("embedding table is empty")]
    Empty,
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Index of a canonical residue in [`AMINO_ACIDS`].
pub fn residue_index(b: u8) -> Option<usize> {
    AMINO_ACIDS.iter().position(|&a| a == b)
}

fn trigram_code(tri: &[u8]) -> Result<usize, EmbeddingError> {
    let mut code = 0;
    for &b in tri {
        let i = residue_index(b).ok_or(EmbeddingError::NonCanonical(b as char))?;
        code = code * 20 + i;
    }
    Ok(code)
}

/// Deterministic stand-in vector for a trigram: entries uniform in
/// `[-0.5, 0.5]`, seeded by `(seed, trigram)`.
pub fn fallback_vector(trigram: &[u8], seed: u64, dim: usize) -> Result<Vec<f64>, EmbeddingError> {
    if trigram.len() != 3 {
        return Err(EmbeddingError::Format {
            line: 0,
            detail: format!("trigram must have 3 letters, got {}", trigram.len()),
        });
    }
    let code = trigram_code(trigram)?;
    let mut r = rng::substream(seed, TRIGRAM_STREAM, &[code as u64]);
    Ok((0..dim).map(|_| r.random_range(-0.5..=0.5)).collect())
}

/// Trigram → vector lookup with a seeded fallback for missing entries.
#[derive(Debug)]
pub struct TrigramTable {
    dim: usize,
    entries: HashMap<[u8; 3], Vec<f64>>,
    fallback_seed: u64,
    fallback: OnceLock<Vec<f64>>,
    misses: AtomicU64,
}

/// One site representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionEmbedding {
    pub vector: Vec<f64>,
    pub position: usize,
    pub time_index: i64,
}

impl TrigramTable {
    /// A table with no pretrained entries; every lookup uses the fallback.
    pub fn fallback_only(dim: usize, fallback_seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        TrigramTable {
            dim,
            entries: HashMap::new(),
            fallback_seed,
            fallback: OnceLock::new(),
            misses: AtomicU64::new(0),
        }
    }

    pub fn from_entries(
        entries: HashMap<[u8; 3], Vec<f64>>,
        fallback_seed: u64,
    ) -> Result<Self, EmbeddingError> {
        let dim = entries.values().next().ok_or(EmbeddingError::Empty)?.len();
        if dim == 0 || entries.values().any(|v| v.len() != dim) {
            return Err(EmbeddingError::Format {
                line: 0,
                detail: "entries have inconsistent dimensions".into(),
            });
        }
        Ok(TrigramTable {
            dim,
            entries,
            fallback_seed,
            fallback: OnceLock::new(),
            misses: AtomicU64::new(0),
        })
    }

    pub fn load(path: &Path, fallback_seed: u64) -> Result<Self, EmbeddingError> {
        let io = |source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = std::fs::File::open(path).map_err(io)?;
        Self::parse(std::io::BufReader::new(file), fallback_seed)
    }

    /// Parses a TSV table: one trigram then `dim` tab-separated reals per
    /// line. Surrounding double quotes on a line are ignored. Rows whose key
    /// is not a 3-letter token are skipped.
    pub fn parse<R: BufRead>(reader: R, fallback_seed: u64) -> Result<Self, EmbeddingError> {
        let mut entries: HashMap<[u8; 3], Vec<f64>> = HashMap::new();
        let mut dim = None;
        let mut skipped = 0usize;
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| EmbeddingError::Format {
                line: line_no,
                detail: e.to_string(),
            })?;
            let line = line.trim_end_matches(['\r', '\n']).trim_matches('"');
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let key = fields.next().unwrap_or_default().trim();
            let values = fields
                .map(|f| {
                    let f = f.trim();
                    let v: f64 = f.parse().map_err(|_| EmbeddingError::Format {
                        line: line_no,
                        detail: format!("cannot parse {f:?} as a number"),
                    })?;
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(EmbeddingError::Value {
                            line: line_no,
                            value: f.to_string(),
                        })
                    }
                })
                .collect::<Result<Vec<f64>, _>>()?;
            match dim {
                None if values.is_empty() => {
                    return Err(EmbeddingError::Format {
                        line: line_no,
                        detail: "row has no values".into(),
                    })
                }
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(EmbeddingError::Format {
                        line: line_no,
                        detail: format!("expected {d} values, found {}", values.len()),
                    })
                }
                Some(_) => {}
            }
            let key = key.to_ascii_uppercase();
            let Ok(tri) = <[u8; 3]>::try_from(key.as_bytes()) else {
                skipped += 1;
                continue;
            };
            if entries.insert(tri, values).is_some() {
                warn!("line {line_no}: duplicate trigram {key}, keeping the later row");
            }
        }
        if skipped > 0 {
            warn!("skipped {skipped} rows whose key is not a trigram");
        }
        let dim = dim.ok_or(EmbeddingError::Empty)?;
        if entries.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        Ok(TrigramTable {
            dim,
            entries,
            fallback_seed,
            fallback: OnceLock::new(),
            misses: AtomicU64::new(0),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn fallback_seed(&self) -> u64 {
        self.fallback_seed
    }

    /// Lookups that were served by the fallback because the table lacked the
    /// trigram. Always zero for a fallback-only table.
    pub fn missing_lookups(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    fn fallback_cache(&self) -> &[f64] {
        self.fallback.get_or_init(|| {
            let mut all = Vec::with_capacity(8000 * self.dim);
            for a in AMINO_ACIDS {
                for b in AMINO_ACIDS {
                    for c in AMINO_ACIDS {
                        all.extend(
                            fallback_vector(&[*a, *b, *c], self.fallback_seed, self.dim)
                                .expect("canonical trigram"),
                        );
                    }
                }
            }
            all
        })
    }

    /// Vector for a canonical-alphabet trigram.
    pub fn vector(&self, trigram: &[u8]) -> Result<&[f64], EmbeddingError> {
        if let Ok(key) = <[u8; 3]>::try_from(trigram) {
            if let Some(v) = self.entries.get(&key) {
                return Ok(v);
            }
        }
        let code = trigram_code(trigram)?;
        if !self.entries.is_empty() {
            self.misses.fetch_add(1, Ordering::Relaxed);
        }
        Ok(&self.fallback_cache()[code * self.dim..(code + 1) * self.dim])
    }

    /// Returns a copy of this table with every vector multiplied by `c`.
    pub fn scaled(&self, c: f64) -> TrigramTable {
        let mut entries = HashMap::new();
        for a in AMINO_ACIDS {
            for b in AMINO_ACIDS {
                for d in AMINO_ACIDS {
                    let tri = [*a, *b, *d];
                    let v = self.vector(&tri).expect("canonical trigram");
                    entries.insert(tri, v.iter().map(|x| x * c).collect());
                }
            }
        }
        for (k, v) in &self.entries {
            entries.insert(*k, v.iter().map(|x| x * c).collect());
        }
        TrigramTable {
            dim: self.dim,
            entries,
            fallback_seed: self.fallback_seed,
            fallback: OnceLock::new(),
            misses: AtomicU64::new(0),
        }
    }
}

fn check_site(position: usize, length: usize) -> Result<(), EmbeddingError> {
    if position < 2 || position + 3 > length {
        return Err(EmbeddingError::Boundary { position, length });
    }
    Ok(())
}

/// Smallest and largest 0-based sites with a full trigram neighborhood.
pub fn site_range(length: usize) -> Option<(usize, usize)> {
    (length >= 5).then(|| (2, length - 3))
}

/// Mean of the trigram vectors centered at `p-1`, `p` and `p+1`.
pub fn embed_site(residues: &[u8], position: usize, table: &TrigramTable) -> Result<Vec<f64>, EmbeddingError> {
    check_site(position, residues.len())?;
    let mut out = vec![0.0; table.dim()];
    for center in position - 1..=position + 1 {
        let v = table.vector(&residues[center - 1..=center + 1])?;
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    for o in &mut out {
        *o /= 3.0;
    }
    Ok(out)
}

pub fn embed_position(
    record: &crate::dataset::SequenceRecord,
    position: usize,
    table: &TrigramTable,
) -> Result<PositionEmbedding, EmbeddingError> {
    Ok(PositionEmbedding {
        vector: embed_site(record.residues(), position, table)?,
        position,
        time_index: record.time_index,
    })
}

/// Mean of the site representation over every site with full context; the
/// fixed-size summary used to cluster whole sequences.
pub fn record_vector(residues: &[u8], table: &TrigramTable) -> Result<Vec<f64>, EmbeddingError> {
    let (lo, hi) = site_range(residues.len()).ok_or(EmbeddingError::Boundary {
        position: 2,
        length: residues.len(),
    })?;
    let mut out = vec![0.0; table.dim()];
    for p in lo..=hi {
        for (o, x) in out.iter_mut().zip(embed_site(residues, p, table)?) {
            *o += x;
        }
    }
    let n = (hi - lo + 1) as f64;
    for o in &mut out {
        *o /= n;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table_of(rows: &[(&str, Vec<f64>)]) -> TrigramTable {
        TrigramTable::from_entries(
            rows.iter()
                .map(|(k, v)| (<[u8; 3]>::try_from(k.as_bytes()).unwrap(), v.clone()))
                .collect(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn parse_two_rows() {
        let t = TrigramTable::parse("AAA\t1\t2\t3\t4\nAAC\t0\t0\t0\t1\n".as_bytes(), 0).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 4);
        assert_eq!(t.vector(b"AAC").unwrap(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn ragged_rows_report_line() {
        let err = TrigramTable::parse("AAA\t1\t2\t3\nAAC\t1\t2\t3\t4\n".as_bytes(), 0).unwrap_err();
        assert!(matches!(err, EmbeddingError::Format { line: 2, .. }), "{err}");
    }

    #[test]
    fn non_finite_value_rejected() {
        let err = TrigramTable::parse("AAA\t1\tinf\n".as_bytes(), 0).unwrap_err();
        assert!(matches!(err, EmbeddingError::Value { line: 1, .. }), "{err}");
        let err = TrigramTable::parse("AAA\t1\tNaN\n".as_bytes(), 0).unwrap_err();
        assert!(matches!(err, EmbeddingError::Value { line: 1, .. }), "{err}");
    }

    #[test]
    fn duplicate_keeps_last_and_quotes_are_stripped() {
        let t = TrigramTable::parse("\"AAA\t1\t2\"\nAAA\t3\t4\n<unk>\t0\t0\n".as_bytes(), 0).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.vector(b"AAA").unwrap(), &[3.0, 4.0]);
    }

    #[test]
    fn full_table_has_8000_entries() {
        let mut text = String::new();
        for a in AMINO_ACIDS {
            for b in AMINO_ACIDS {
                for c in AMINO_ACIDS {
                    text.push_str(&format!("{}{}{}\t0.1\t0.2\n", *a as char, *b as char, *c as char));
                }
            }
        }
        let t = TrigramTable::parse(text.as_bytes(), 0).unwrap();
        assert_eq!(t.len(), 20 * 20 * 20);
    }

    #[test]
    fn missing_trigram_falls_back_and_is_counted() {
        let t = table_of(&[("AAA", vec![1.0, 2.0])]);
        let v = t.vector(b"CCC").unwrap().to_vec();
        assert_eq!(v, fallback_vector(b"CCC", 0, 2).unwrap());
        assert_eq!(t.missing_lookups(), 1);
        assert!(t.vector(b"AXA").is_err());
    }

    #[test]
    fn fallback_is_deterministic_and_bounded() {
        assert_eq!(
            fallback_vector(b"AAA", 9, 100).unwrap(),
            fallback_vector(b"AAA", 9, 100).unwrap()
        );
        assert_ne!(
            fallback_vector(b"AAA", 9, 100).unwrap(),
            fallback_vector(b"AAC", 9, 100).unwrap()
        );
        let t = TrigramTable::fallback_only(16, 3);
        let mut count = 0;
        'outer: for a in AMINO_ACIDS {
            for b in AMINO_ACIDS {
                for c in AMINO_ACIDS {
                    let v = t.vector(&[*a, *b, *c]).unwrap();
                    assert!(v.iter().all(|x| (-0.5..=0.5).contains(x)));
                    count += 1;
                    if count == 1000 {
                        break 'outer;
                    }
                }
            }
        }
        assert_eq!(count, 1000);
        assert!(matches!(fallback_vector(b"ABA", 0, 4), Err(EmbeddingError::NonCanonical('B'))));
    }

    #[test]
    fn identical_neighbor_vectors_average_to_themselves() {
        let t = table_of(&[("AAA", vec![0.25, -1.5])]);
        assert_eq!(embed_site(b"AAAAAAA", 3, &t).unwrap(), vec![0.25, -1.5]);
    }

    #[test]
    fn arithmetic_mean_of_three_trigrams() {
        // sequence "ACDEF": centers 1,2,3 → ACD, CDE, DEF
        let t = table_of(&[
            ("ACD", vec![1.0, 0.0]),
            ("CDE", vec![0.0, 1.0]),
            ("DEF", vec![2.0, 2.0]),
        ]);
        assert_eq!(embed_site(b"ACDEF", 2, &t).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn boundary_sites_rejected() {
        let t = TrigramTable::fallback_only(4, 0);
        let seq = b"ACDEFGH";
        assert!(embed_site(seq, 1, &t).is_err());
        assert!(embed_site(seq, 5, &t).is_err());
        assert!(embed_site(seq, 2, &t).is_ok());
        assert!(embed_site(seq, 4, &t).is_ok());
        assert_eq!(site_range(7), Some((2, 4)));
        assert_eq!(site_range(4), None);
    }

    #[test]
    fn matches_direct_reimplementation() {
        let t = TrigramTable::fallback_only(12, 77);
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let seq: Vec<u8> = (0..40).map(|_| AMINO_ACIDS[r.random_range(0..20)]).collect();
        for p in 2..=37 {
            let got = embed_site(&seq, p, &t).unwrap();
            let a = fallback_vector(&seq[p - 2..p + 1], 77, 12).unwrap();
            let b = fallback_vector(&seq[p - 1..p + 2], 77, 12).unwrap();
            let c = fallback_vector(&seq[p..p + 3], 77, 12).unwrap();
            for (d, g) in got.iter().enumerate() {
                assert!((g - (a[d] + b[d] + c[d]) / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_in_table_scale() {
        let t = TrigramTable::fallback_only(6, 5);
        let scaled = t.scaled(-2.5);
        let seq = b"MKTIIALSYIFCLVFA";
        for p in 2..=13 {
            let a = embed_site(seq, p, &t).unwrap();
            let b = embed_site(seq, p, &scaled).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((y - (-2.5) * x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn depends_only_on_local_window() {
        let t = TrigramTable::fallback_only(6, 5);
        let a = b"MKTIIALSYIFCLVFA".to_vec();
        let mut b = a.clone();
        b[0] = b'W';
        b[12] = b'W';
        // site 6 reads residues 4..=8
        assert_eq!(embed_site(&a, 6, &t).unwrap(), embed_site(&b, 6, &t).unwrap());
        b[8] = b'W';
        assert_ne!(embed_site(&a, 6, &t).unwrap(), embed_site(&b, 6, &t).unwrap());
    }
}
