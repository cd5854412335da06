//! Turns raw timestamped weighted edge lists into normalized tensors:
//! token-to-index remapping, time binning into a fixed number of slots,
//! and min-max weight normalization, with every constant recorded in a
//! manifest so the mapping can be reproduced or inverted.

use std::collections::HashMap;
use std::fs;
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DuplicatePolicy, Entry, SparseTensorCOO, TensorShape};

/// One line of an edge list, before any remapping.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub source_id: String,
    pub target_id: String,
    pub weight: f64,
    pub timestamp: f64,
}

/// Everything needed to reproduce or invert an ingestion run.
///
/// Dense indices are the positions in `source_ids` / `target_ids`, which
/// hold raw tokens in first-appearance order.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestManifest {
    pub source_ids: Vec<String>,
    pub target_ids: Vec<String>,
    pub k_slots: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub duplicate_policy: DuplicatePolicy,
}

impl IngestManifest {
    /// Inverse of the min-max map applied at ingestion.
    pub fn denormalize_weight(&self, value: f64) -> f64 {
        self.w_min + value * (self.w_max - self.w_min)
    }

    /// Writes `manifest.tsv` plus the two id-map files it references.
    pub fn write_files(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let write = |name: &str, content: String| -> Result<()> {
            let path = dir.join(name);
            fs::write(&path, content).map_err(|e| Error::io(path, e))
        };

        let id_map = |ids: &[String]| {
            let mut out = String::new();
            for (idx, token) in ids.iter().enumerate() {
                out.push_str(&format!("{token}\t{idx}\n"));
            }
            out
        };
        write("sources.tsv", id_map(&self.source_ids))?;
        write("targets.tsv", id_map(&self.target_ids))?;

        let mut manifest = String::new();
        manifest.push_str(&format!("k_slots\t{}\n", self.k_slots));
        manifest.push_str(&format!("t_min\t{:.16e}\n", self.t_min));
        manifest.push_str(&format!("t_max\t{:.16e}\n", self.t_max));
        manifest.push_str(&format!("w_min\t{:.16e}\n", self.w_min));
        manifest.push_str(&format!("w_max\t{:.16e}\n", self.w_max));
        manifest.push_str(&format!("duplicate_policy\t{}\n", self.duplicate_policy));
        manifest.push_str("source_ids_file\tsources.tsv\n");
        manifest.push_str("target_ids_file\ttargets.tsv\n");
        write("manifest.tsv", manifest)
    }
}

/// Parses `source<delim>target<delim>weight<delim>timestamp` lines.
/// Lines starting with `#` and blank lines are skipped; anything else
/// malformed is an error naming its 1-based line number.
pub fn parse_edge_list(reader: impl BufRead, delimiter: char) -> Result<Vec<RawRecord>> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(delimiter).map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "expected 4 fields separated by {delimiter:?}, got {}",
                    fields.len()
                ),
            });
        }
        let number = |s: &str, name: &str| -> Result<f64> {
            let v: f64 = s.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid {name} {s:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-finite {name} {s:?}"),
                });
            }
            Ok(v)
        };
        records.push(RawRecord {
            source_id: fields[0].to_string(),
            target_id: fields[1].to_string(),
            weight: number(fields[2], "weight")?,
            timestamp: number(fields[3], "timestamp")?,
        });
    }
    Ok(records)
}

pub fn read_edge_file(path: impl AsRef<Path>, delimiter: char) -> Result<Vec<RawRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(std::io::BufReader::new(file), delimiter)
}

/// Maps a timestamp onto one of `k_slots` equal-width bins spanning
/// `[t_min, t_max]`; the right edge belongs to the last bin.
pub fn bin_time(timestamp: f64, t_min: f64, t_max: f64, k_slots: usize) -> Result<usize> {
    if k_slots == 0 {
        return Err(Error::Config("k_slots must be at least 1".into()));
    }
    if !(t_min..=t_max).contains(&timestamp) {
        return Err(Error::Range(format!(
            "timestamp {timestamp} outside [{t_min}, {t_max}]"
        )));
    }
    if t_min == t_max {
        // single observed instant; binning is degenerate
        return Ok(0);
    }
    let position = (timestamp - t_min) / (t_max - t_min) * k_slots as f64;
    Ok((position.floor() as usize).min(k_slots - 1))
}

/// Min-max map of `weight` from `[w_min, w_max]` onto [0, 1].
pub fn normalize_weight(weight: f64, w_min: f64, w_max: f64) -> Result<f64> {
    if w_min >= w_max || w_min.is_nan() || w_max.is_nan() {
        return Err(Error::Config(format!(
            "degenerate weight range [{w_min}, {w_max}]"
        )));
    }
    if !(w_min..=w_max).contains(&weight) {
        return Err(Error::Range(format!(
            "weight {weight} outside [{w_min}, {w_max}]"
        )));
    }
    Ok((weight - w_min) / (w_max - w_min))
}

/// End-to-end construction: remap ids in first-appearance order (sources
/// and targets indexed independently), take time and weight extrema from
/// the data, bin and normalize every record, and merge collisions.
pub fn build_tensor(
    records: &[RawRecord],
    k_slots: usize,
    duplicate_policy: DuplicatePolicy,
) -> Result<(SparseTensorCOO, IngestManifest)> {
    if records.is_empty() {
        return Err(Error::Config("no records to ingest".into()));
    }
    if k_slots == 0 {
        return Err(Error::Config("k_slots must be at least 1".into()));
    }

    let mut source_index: HashMap<&str, usize> = HashMap::new();
    let mut target_index: HashMap<&str, usize> = HashMap::new();
    let mut source_ids = Vec::new();
    let mut target_ids = Vec::new();
    for record in records {
        source_index.entry(&record.source_id).or_insert_with(|| {
            source_ids.push(record.source_id.clone());
            source_ids.len() - 1
        });
        target_index.entry(&record.target_id).or_insert_with(|| {
            target_ids.push(record.target_id.clone());
            target_ids.len() - 1
        });
    }

    let (mut t_min, mut t_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut w_min, mut w_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for record in records {
        t_min = t_min.min(record.timestamp);
        t_max = t_max.max(record.timestamp);
        w_min = w_min.min(record.weight);
        w_max = w_max.max(record.weight);
    }

    let shape = TensorShape::new(source_ids.len(), target_ids.len(), k_slots)?;
    let mut tensor = SparseTensorCOO::new(shape);
    for record in records {
        let entry = Entry::new(
            source_index[record.source_id.as_str()],
            target_index[record.target_id.as_str()],
            bin_time(record.timestamp, t_min, t_max, k_slots)?,
            normalize_weight(record.weight, w_min, w_max)?,
        );
        tensor.insert_or_merge(entry, duplicate_policy)?;
    }

    let manifest = IngestManifest {
        source_ids,
        target_ids,
        k_slots,
        t_min,
        t_max,
        w_min,
        w_max,
        duplicate_policy,
    };
    Ok((tensor, manifest))
}
