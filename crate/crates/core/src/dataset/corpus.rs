use std::collections::BTreeMap;
use std::path::Path;

use super::{DatasetError, SequenceRecord, TimeCohort};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// Header `id,time_index,sequence`.
    Csv,
    /// Headers carrying `|year=YYYY|` or `|month=YYYY-MM|`.
    Fasta,
}

impl CorpusFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(CorpusFormat::Csv),
            "fa" | "fasta" | "faa" | "fas" => Some(CorpusFormat::Fasta),
            _ => None,
        }
    }
}

/// Reads a corpus file and groups it into cohorts sorted by time index.
/// Records are returned as read; sanitization is a separate step.
pub fn parse_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<TimeCohort>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus_str(&text, format)
}

pub fn parse_corpus_str(text: &str, format: CorpusFormat) -> Result<Vec<TimeCohort>, DatasetError> {
    let records = match format {
        CorpusFormat::Csv => parse_csv(text)?,
        CorpusFormat::Fasta => parse_fasta(text)?,
    };
    group(records)
}

fn parse_err(location: String, detail: impl Into<String>) -> DatasetError {
    DatasetError::Parse {
        location,
        detail: detail.into(),
    }
}

fn clean_sequence(raw: &str) -> Vec<u8> {
    raw.bytes()
        .filter(|b| !b.is_ascii_whitespace())
        .map(|b| b.to_ascii_uppercase())
        .collect()
}

fn parse_csv(text: &str) -> Result<Vec<SequenceRecord>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_err("line 1".into(), e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| parse_err("line 1".into(), format!("missing column {name:?}")))
    };
    let (id_col, time_col, seq_col) = (column("id")?, column("time_index")?, column("sequence")?);

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(format!("line {line}"), e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let loc = || format!("line {line}");
        let field = |i: usize| row.get(i).unwrap_or("");
        let id = field(id_col);
        if id.is_empty() {
            return Err(parse_err(loc(), "empty id"));
        }
        let time = field(time_col);
        if time.is_empty() {
            return Err(parse_err(loc(), format!("record {id}: missing time index")));
        }
        let time_index: i64 = time
            .parse()
            .map_err(|_| parse_err(loc(), format!("record {id}: bad time index {time:?}")))?;
        let residues = clean_sequence(field(seq_col));
        if residues.is_empty() {
            return Err(parse_err(loc(), format!("record {id}: empty sequence")));
        }
        records.push(SequenceRecord::new(id, time_index, residues));
    }
    Ok(records)
}

/// Time index from a FASTA header: `year=YYYY` gives the year, `month=YYYY-MM`
/// gives `YYYY * 12 + MM - 1`.
fn header_time(header: &str) -> Option<Result<i64, String>> {
    for field in header.split('|') {
        let field = field.trim();
        if let Some(y) = field.strip_prefix("year=") {
            return Some(y.parse().map_err(|_| format!("bad year {y:?}")));
        }
        if let Some(m) = field.strip_prefix("month=") {
            let parsed = m.split_once('-').and_then(|(y, mm)| {
                let y: i64 = y.parse().ok()?;
                let mm: i64 = mm.parse().ok()?;
                (1..=12).contains(&mm).then(|| y * 12 + mm - 1)
            });
            return Some(parsed.ok_or_else(|| format!("bad month {m:?}")));
        }
    }
    None
}

fn parse_fasta(text: &str) -> Result<Vec<SequenceRecord>, DatasetError> {
    struct Pending {
        line: usize,
        id: String,
        time_index: i64,
        residues: Vec<u8>,
    }
    fn finish(p: Pending, out: &mut Vec<SequenceRecord>) -> Result<(), DatasetError> {
        if p.residues.is_empty() {
            return Err(parse_err(
                format!("line {}", p.line),
                format!("record {}: empty sequence", p.id),
            ));
        }
        out.push(SequenceRecord::new(p.id, p.time_index, p.residues));
        Ok(())
    }

    let mut out = Vec::new();
    let mut pending: Option<Pending> = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            if let Some(p) = pending.take() {
                finish(p, &mut out)?;
            }
            let id = header.split('|').next().unwrap_or("").trim().to_string();
            if id.is_empty() {
                return Err(parse_err(format!("line {line_no}"), "empty record id"));
            }
            let time_index = match header_time(header) {
                Some(Ok(t)) => t,
                Some(Err(detail)) => {
                    return Err(parse_err(format!("line {line_no}"), format!("record {id}: {detail}")))
                }
                None => {
                    return Err(parse_err(
                        format!("line {line_no}"),
                        format!("record {id}: missing |year=| or |month=| tag"),
                    ))
                }
            };
            pending = Some(Pending {
                line: line_no,
                id,
                time_index,
                residues: Vec::new(),
            });
        } else {
            match pending.as_mut() {
                Some(p) => p.residues.extend(clean_sequence(line)),
                None => {
                    return Err(parse_err(
                        format!("line {line_no}"),
                        "sequence data before the first header",
                    ))
                }
            }
        }
    }
    if let Some(p) = pending.take() {
        finish(p, &mut out)?;
    }
    Ok(out)
}

fn group(records: Vec<SequenceRecord>) -> Result<Vec<TimeCohort>, DatasetError> {
    let expected = records.first().ok_or(DatasetError::NoRecords)?.len();
    let offenders: Vec<(String, usize)> = records
        .iter()
        .filter(|r| r.len() != expected)
        .map(|r| (r.id.clone(), r.len()))
        .collect();
    if !offenders.is_empty() {
        return Err(DatasetError::LengthMismatch { expected, offenders });
    }
    let mut by_time: BTreeMap<i64, Vec<SequenceRecord>> = BTreeMap::new();
    for r in records {
        by_time.entry(r.time_index).or_default().push(r);
    }
    Ok(by_time
        .into_iter()
        .map(|(time_index, records)| TimeCohort { time_index, records })
        .collect())
}
