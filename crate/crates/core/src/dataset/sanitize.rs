use rand::Rng;

use super::{DatasetError, SequenceRecord, TimeCohort};
use crate::embedding::AMINO_ACIDS;
use crate::rng;

/// Resolves one residue symbol. Canonical letters pass through without
/// consuming randomness; ambiguity codes are drawn from `rng`:
/// `B → {D, N}`, `Z → {E, Q}`, `J → {I, L}`, `X →` any canonical letter.
pub fn sanitize_residue<R: Rng + ?Sized>(symbol: u8, rng: &mut R) -> Result<u8, DatasetError> {
    if AMINO_ACIDS.contains(&symbol) {
        return Ok(symbol);
    }
    let choices: &[u8] = match symbol {
        b'B' => b"DN",
        b'Z' => b"EQ",
        b'J' => b"IL",
        b'X' => AMINO_ACIDS,
        other => {
            return Err(DatasetError::InvalidSymbol {
                symbol: other as char,
            })
        }
    };
    Ok(choices[rng.random_range(0..choices.len())])
}

pub fn sanitize_sequence<R: Rng + ?Sized>(residues: &[u8], rng: &mut R) -> Result<Vec<u8>, DatasetError> {
    residues.iter().map(|&b| sanitize_residue(b, rng)).collect()
}

/// Sanitizes a record with its own sub-stream keyed by cohort time and the
/// record's position in the cohort.
pub fn sanitize_record(
    record: &SequenceRecord,
    ordinal: usize,
    seed: u64,
) -> Result<SequenceRecord, DatasetError> {
    let mut r = rng::substream(
        seed,
        rng::SANITIZE,
        &[record.time_index as u64, ordinal as u64],
    );
    let residues = sanitize_sequence(record.residues(), &mut r).map_err(|e| match e {
        DatasetError::InvalidSymbol { symbol } => DatasetError::Parse {
            location: format!("record {}", record.id),
            detail: format!("invalid residue symbol {symbol:?}"),
        },
        other => other,
    })?;
    Ok(SequenceRecord::new(record.id.clone(), record.time_index, residues))
}

pub(crate) fn sanitize_cohorts(cohorts: &[TimeCohort], seed: u64) -> Result<Vec<TimeCohort>, DatasetError> {
    cohorts
        .iter()
        .map(|c| {
            Ok(TimeCohort {
                time_index: c.time_index,
                records: c
                    .records
                    .iter()
                    .enumerate()
                    .map(|(i, r)| sanitize_record(r, i, seed))
                    .collect::<Result<_, _>>()?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_passthrough() {
        let mut r = rng::substream(1, rng::SANITIZE, &[]);
        for &a in AMINO_ACIDS {
            assert_eq!(sanitize_residue(a, &mut r).unwrap(), a);
        }
    }

    #[test]
    fn ambiguity_codes_resolve_reproducibly() {
        let draw = |sym| {
            let mut r = rng::substream(42, rng::SANITIZE, &[]);
            sanitize_residue(sym, &mut r).unwrap()
        };
        let b = draw(b'B');
        assert!(b == b'D' || b == b'N');
        assert_eq!(b, draw(b'B'));
        assert!(matches!(draw(b'Z'), b'E' | b'Q'));
        assert!(matches!(draw(b'J'), b'I' | b'L'));
    }

    #[test]
    fn other_symbols_rejected() {
        let mut r = rng::substream(1, rng::SANITIZE, &[]);
        for s in *b"-1*OUa" {
            assert!(matches!(
                sanitize_residue(s, &mut r),
                Err(DatasetError::InvalidSymbol { .. })
            ));
        }
    }

    #[test]
    fn x_is_roughly_uniform() {
        let mut r = rng::substream(42, rng::SANITIZE, &[]);
        let mut counts = [0usize; 20];
        let n = 10_000;
        for _ in 0..n {
            let c = sanitize_residue(b'X', &mut r).unwrap();
            counts[AMINO_ACIDS.iter().position(|&a| a == c).unwrap()] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((f - 0.05).abs() < 0.02, "{f}");
        }
    }

    #[test]
    fn record_errors_name_the_record() {
        let rec = SequenceRecord::new("seq7", 2011, b"AC-D".to_vec());
        let err = sanitize_record(&rec, 0, 1).unwrap_err();
        assert!(err.to_string().contains("seq7"), "{err}");
    }

    proptest! {
        #[test]
        fn idempotent(seq in "[ACDEFGHIKLMNPQRSTVWYBZJX]{1,60}", seed in any::<u64>()) {
            let once = sanitize_sequence(seq.as_bytes(), &mut rng::substream(seed, rng::SANITIZE, &[])).unwrap();
            let twice = sanitize_sequence(&once, &mut rng::substream(seed, rng::SANITIZE, &[])).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.iter().all(|b| AMINO_ACIDS.contains(b)));
        }
    }
}
