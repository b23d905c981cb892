//! Per-beat feature and blood-pressure tables.
//!
//! Features: CSV header `t,ptt_s,hr,ri,st,up_time,sv,dv`, `t` the beat's
//! R-peak time in seconds. A JSON sidecar next to it (same stem, `.json`)
//! carries labels, normalization statistics when the values are normalized,
//! and quality-log entries.
//!
//! Blood pressure: CSV header `t,sbp,dbp,mbp`, mmHg.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seqpress_core::features::{FeatureSequence, FeatureStats, QualityIssue, FEATURE_NAMES};
use seqpress_core::{FEATURE_COUNT, TARGET_COUNT};

use super::waveform::{csv_err, parse_row};
use crate::error::{AppError, Result};

pub const BP_HEADER: [&str; 4] = ["t", "sbp", "dbp", "mbp"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FeatureSidecar {
    pub subject_id: String,
    pub session_label: String,
    pub normalization: Option<FeatureStats>,
    #[serde(default)]
    pub quality: Vec<QualityIssue>,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn feature_header() -> Vec<&'static str> {
    let mut h = vec!["t"];
    h.extend(FEATURE_NAMES);
    h
}

pub fn write_feature_csv(path: &Path, seq: &FeatureSequence, quality: &[QualityIssue]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(feature_header()).map_err(|e| csv_err(path, e))?;
    for (t, row) in seq.times.iter().zip(&seq.values) {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))?;
    let side = FeatureSidecar {
        subject_id: seq.subject_id.clone(),
        session_label: seq.session_label.clone(),
        normalization: seq.normalization.clone(),
        quality: quality.to_vec(),
    };
    write_json(&sidecar_path(path), &side)
}

/// Reads a feature table and, when present, its sidecar.
pub fn read_feature_csv(path: &Path) -> Result<FeatureSequence> {
    let rows = read_numeric_csv::<{ FEATURE_COUNT + 1 }>(path, &feature_header())?;
    let side_path = sidecar_path(path);
    let side: FeatureSidecar = if side_path.exists() { read_json(&side_path)? } else { FeatureSidecar::default() };
    Ok(FeatureSequence {
        times: rows.iter().map(|r| r[0]).collect(),
        values: rows.iter().map(|r| std::array::from_fn(|k| r[k + 1])).collect(),
        normalization: side.normalization,
        subject_id: side.subject_id,
        session_label: side.session_label,
    })
}

pub fn write_bp_csv(path: &Path, times: &[f64], bp: &[[f64; TARGET_COUNT]]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(BP_HEADER).map_err(|e| csv_err(path, e))?;
    for (t, r) in times.iter().zip(bp) {
        w.write_record([t.to_string(), r[0].to_string(), r[1].to_string(), r[2].to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn read_bp_csv(path: &Path) -> Result<(Vec<f64>, Vec<[f64; TARGET_COUNT]>)> {
    let rows = read_numeric_csv::<4>(path, &BP_HEADER)?;
    Ok((rows.iter().map(|r| r[0]).collect(), rows.iter().map(|r| [r[1], r[2], r[3]]).collect()))
}

/// Reads a CSV whose header must equal `header` and whose fields are all
/// numbers.
pub fn read_numeric_csv<const N: usize>(path: &Path, header: &[&str]) -> Result<Vec<[f64; N]>> {
    if !path.exists() {
        return Err(AppError::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let got: Vec<String> = r.headers().map_err(|e| csv_err(path, e))?.iter().map(|h| h.trim().to_string()).collect();
    if got != header {
        return Err(AppError::format(path, format!("expected header {}", header.join(","))));
    }
    let mut out = Vec::new();
    for (line, row) in r.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        out.push(parse_row::<N>(&row).map_err(|m| AppError::format(path, format!("row {}: {m}", line + 2)))?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| AppError::format(path, e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| AppError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::format(path, e.to_string()))
}
