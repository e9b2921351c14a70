//! JSON Lines sample files and the split manifest.
//!
//! A samples file starts with one header object and then holds one
//! [`SiteSample`] per line, in the order the manifest's groups describe.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, SiteSample, SplitCounts, Splits};
use crate::fsutil;

pub const SAMPLES_FORMAT_VERSION: u32 = 1;
const SAMPLES_KIND: &str = "site-samples";
const MANIFEST_KIND: &str = "split-manifest";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplesHeader {
    pub format_version: u32,
    pub kind: String,
    pub count: usize,
    pub window: usize,
    pub dim: usize,
}

impl SamplesHeader {
    pub fn new(count: usize, window: usize, dim: usize) -> Self {
        SamplesHeader {
            format_version: SAMPLES_FORMAT_VERSION,
            kind: SAMPLES_KIND.into(),
            count,
            window,
            dim,
        }
    }
}

/// One window group inside the samples file. Within a group the order is
/// validation, training, test.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupManifest {
    pub label_time: i64,
    pub offset: usize,
    /// Samples produced before the per-group cap.
    pub generated: usize,
    pub counts: SplitCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub format_version: u32,
    pub kind: String,
    pub samples_file: String,
    pub seed: u64,
    pub window: usize,
    pub dim: usize,
    pub groups: Vec<GroupManifest>,
    pub totals: SplitCounts,
}

impl SplitManifest {
    pub fn new(samples_file: String, seed: u64, window: usize, dim: usize, groups: Vec<GroupManifest>) -> Self {
        let totals = groups.iter().fold(
            SplitCounts {
                train: 0,
                val: 0,
                test: 0,
            },
            |acc, g| SplitCounts {
                train: acc.train + g.counts.train,
                val: acc.val + g.counts.val,
                test: acc.test + g.counts.test,
            },
        );
        SplitManifest {
            format_version: SAMPLES_FORMAT_VERSION,
            kind: MANIFEST_KIND.into(),
            samples_file,
            seed,
            window,
            dim,
            groups,
            totals,
        }
    }

    /// Cuts a samples list into splits according to the group layout.
    pub fn apply(&self, samples: &[SiteSample]) -> Result<Splits, DatasetError> {
        let mut out = Splits::default();
        for g in &self.groups {
            let end = g.offset + g.counts.total();
            if end > samples.len() {
                return Err(DatasetError::Contract(format!(
                    "manifest group {} reaches sample {end} but the file has {}",
                    g.label_time,
                    samples.len()
                )));
            }
            let s = &samples[g.offset..end];
            let (val, rest) = s.split_at(g.counts.val);
            let (train, test) = rest.split_at(g.counts.train);
            out.val.extend_from_slice(val);
            out.train.extend_from_slice(train);
            out.test.extend_from_slice(test);
        }
        Ok(out)
    }
}

fn json_err(location: String) -> impl FnOnce(serde_json::Error) -> DatasetError {
    move |e| DatasetError::Parse {
        location,
        detail: e.to_string(),
    }
}

pub fn write_samples(path: &Path, header: &SamplesHeader, samples: &[SiteSample]) -> Result<(), DatasetError> {
    let mut buf = serde_json::to_vec(header).map_err(json_err("header".into()))?;
    buf.push(b'\n');
    for s in samples {
        serde_json::to_writer(&mut buf, s).map_err(json_err("sample".into()))?;
        buf.push(b'\n');
    }
    fsutil::write_atomic(path, &buf).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses a samples file body. Every sample must match the header's window
/// and dimension, and the count must agree.
pub fn parse_samples(text: &str) -> Result<(SamplesHeader, Vec<SiteSample>), DatasetError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(DatasetError::NoRecords)?;
    let header: SamplesHeader = serde_json::from_str(first).map_err(json_err("line 1".into()))?;
    if header.format_version != SAMPLES_FORMAT_VERSION || header.kind != SAMPLES_KIND {
        return Err(DatasetError::Parse {
            location: "line 1".into(),
            detail: format!(
                "unsupported samples format {} version {}",
                header.kind, header.format_version
            ),
        });
    }
    let mut samples = Vec::with_capacity(header.count.min(1 << 20));
    for (i, line) in lines {
        let loc = format!("line {}", i + 1);
        let s: SiteSample = serde_json::from_str(line).map_err(json_err(loc.clone()))?;
        if s.window() != header.window || s.inputs.iter().any(|v| v.len() != header.dim) {
            return Err(DatasetError::Parse {
                location: loc,
                detail: format!("sample shape does not match header {}x{}", header.window, header.dim),
            });
        }
        if s.label > 1 {
            return Err(DatasetError::Parse {
                location: loc,
                detail: format!("label {} is not 0 or 1", s.label),
            });
        }
        samples.push(s);
    }
    if samples.len() != header.count {
        return Err(DatasetError::Parse {
            location: "header".into(),
            detail: format!("header announces {} samples, file has {}", header.count, samples.len()),
        });
    }
    Ok((header, samples))
}

pub fn read_samples(path: &Path) -> Result<(SamplesHeader, Vec<SiteSample>), DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_samples(&text).map_err(|e| match e {
        DatasetError::Parse { location, detail } => DatasetError::Parse {
            location: format!("{}: {location}", path.display()),
            detail,
        },
        other => other,
    })
}

pub fn parse_manifest(text: &str) -> Result<SplitManifest, DatasetError> {
    let m: SplitManifest = serde_json::from_str(text).map_err(json_err("manifest".into()))?;
    if m.format_version != SAMPLES_FORMAT_VERSION || m.kind != MANIFEST_KIND {
        return Err(DatasetError::Parse {
            location: "manifest".into(),
            detail: format!("unsupported manifest {} version {}", m.kind, m.format_version),
        });
    }
    Ok(m)
}

pub fn read_manifest(path: &Path) -> Result<SplitManifest, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_manifest(&text)
}
