//! Dataset directories.
//!
//! A dataset is a directory holding `manifest.json` plus, per recording, a
//! feature table and a BP table (see [`super::tables`]). The manifest lists
//! recordings in order:
//!
//! ```json
//! { "recordings": [ { "subject_id": "S01", "session_label": "day1",
//!                     "features": "S01_day1_features.csv",
//!                     "targets": "S01_day1_bp.csv" } ] }
//! ```
//!
//! Synthetic datasets also carry `truth.json` with the latent trajectories,
//! drift per session and the memoryless oracle RMSE.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use seqpress_core::features::FeatureSequence;
use seqpress_core::synth::FeatureCohort;
use seqpress_core::train::Recording;
use seqpress_core::TARGET_COUNT;

use super::tables::{read_bp_csv, read_feature_csv, read_json, write_bp_csv, write_feature_csv, write_json};
use crate::error::{AppError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const TRUTH: &str = "truth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub session_label: String,
    pub features: String,
    pub targets: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Manifest {
    pub recordings: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTruth {
    pub subject_id: String,
    pub session_label: String,
    pub drift: f64,
    pub latent: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub oracle_rmse: [f64; TARGET_COUNT],
    pub sessions: Vec<SessionTruth>,
}

/// Beat times for a recording without explicit times: cumulative sums of
/// the beat period `60 / hr` (column 1), starting at 0.
pub fn beat_times(rec: &Recording) -> Vec<f64> {
    let mut t = 0.0;
    rec.features
        .iter()
        .map(|row| {
            let now = t;
            t += if row[1] > 0.0 { 60.0 / row[1] } else { 1.0 };
            now
        })
        .collect()
}

pub fn write_dataset(dir: &Path, recordings: &[Recording]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let mut manifest = Manifest::default();
    for rec in recordings {
        rec.check()?;
        let stem = format!("{}_{}", rec.subject_id, rec.session_label);
        let entry = ManifestEntry {
            subject_id: rec.subject_id.clone(),
            session_label: rec.session_label.clone(),
            features: format!("{stem}_features.csv"),
            targets: format!("{stem}_bp.csv"),
        };
        let times = beat_times(rec);
        let mut seq = FeatureSequence::raw(times.clone(), rec.features.clone());
        seq.subject_id = rec.subject_id.clone();
        seq.session_label = rec.session_label.clone();
        write_feature_csv(&dir.join(&entry.features), &seq, &[])?;
        write_bp_csv(&dir.join(&entry.targets), &times, &rec.targets)?;
        manifest.recordings.push(entry);
    }
    write_json(&dir.join(MANIFEST), &manifest)
}

pub fn write_synth_dataset(dir: &Path, cohort: &FeatureCohort) -> Result<()> {
    write_dataset(dir, &cohort.recordings())?;
    let truth = SynthTruth {
        oracle_rmse: cohort.oracle_rmse,
        sessions: cohort
            .sessions
            .iter()
            .map(|s| SessionTruth {
                subject_id: s.recording.subject_id.clone(),
                session_label: s.recording.session_label.clone(),
                drift: s.drift,
                latent: s.latent.clone(),
            })
            .collect(),
    };
    write_json(&dir.join(TRUTH), &truth)
}

pub fn read_dataset(dir: &Path) -> Result<Vec<Recording>> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    let mut out = Vec::with_capacity(manifest.recordings.len());
    for e in manifest.recordings {
        let fpath = dir.join(&e.features);
        let feats = read_feature_csv(&fpath)?;
        if feats.normalization.is_some() {
            return Err(AppError::format(&fpath, "dataset features must be unnormalized"));
        }
        let (_, targets) = read_bp_csv(&dir.join(&e.targets))?;
        if targets.len() != feats.len() {
            return Err(AppError::format(
                &dir.join(&e.targets),
                format!("{} BP rows for {} feature rows", targets.len(), feats.len()),
            ));
        }
        out.push(Recording {
            subject_id: e.subject_id,
            session_label: e.session_label,
            features: feats.values,
            targets,
        });
    }
    Ok(out)
}

pub fn read_synth_truth(dir: &Path) -> Result<Option<SynthTruth>> {
    let p = dir.join(TRUTH);
    if p.exists() {
        read_json(&p).map(Some)
    } else {
        Ok(None)
    }
}
