//! From recordings to normalized training windows.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::features::{FeatureError, FeatureStats};
use crate::math::Matrix;
use crate::rng::SeqRng;
use crate::{FEATURE_COUNT, TARGET_COUNT};

use super::TrainError;

/// One subject/session time series: raw per-beat features and the
/// matching blood pressure in mmHg.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub subject_id: String,
    pub session_label: String,
    pub features: Vec<[f64; FEATURE_COUNT]>,
    /// (SBP, DBP, MBP) per beat, mmHg.
    pub targets: Vec<[f64; TARGET_COUNT]>,
}

impl Recording {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn check(&self) -> Result<(), TrainError> {
        if self.features.len() != self.targets.len() {
            return Err(TrainError::ShapeMismatch);
        }
        Ok(())
    }

    /// Rows `from..to` as a new recording with the same labels.
    pub fn slice(&self, from: usize, to: usize) -> Self {
        Self {
            subject_id: self.subject_id.clone(),
            session_label: self.session_label.clone(),
            features: self.features[from..to].to_vec(),
            targets: self.targets[from..to].to_vec(),
        }
    }
}

/// A `T`-step window of normalized features and scaled targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub x: Matrix,
    pub y: Matrix,
    pub subject_id: String,
    pub session_label: String,
    /// First row of the window in its recording.
    pub offset: usize,
}

/// Per-channel maxima used to map mmHg onto `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaling {
    pub max: [f64; TARGET_COUNT],
}

impl TargetScaling {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64; TARGET_COUNT]>) -> Result<Self, TrainError> {
        let mut max = [f64::NEG_INFINITY; TARGET_COUNT];
        let mut any = false;
        for r in rows {
            any = true;
            for k in 0..TARGET_COUNT {
                if !(r[k] > 0.0) {
                    return Err(TrainError::NonPositiveTarget(r[k]));
                }
                max[k] = max[k].max(r[k]);
            }
        }
        if !any {
            return Err(TrainError::EmptySplit("targets"));
        }
        Ok(Self { max })
    }

    pub fn apply(&self, row: &[f64; TARGET_COUNT]) -> [f64; TARGET_COUNT] {
        core::array::from_fn(|k| row[k] / self.max[k])
    }

    pub fn invert(&self, row: &[f64; TARGET_COUNT]) -> [f64; TARGET_COUNT] {
        core::array::from_fn(|k| row[k] * self.max[k])
    }
}

/// Divides every channel by its maximum; returns the scaled rows and the
/// maxima.
pub fn normalize_targets(rows: &[[f64; TARGET_COUNT]]) -> Result<(Vec<[f64; TARGET_COUNT]>, TargetScaling), TrainError> {
    let scaling = TargetScaling::fit(rows.iter())?;
    Ok((rows.iter().map(|r| scaling.apply(r)).collect(), scaling))
}

/// Scaled values above 1 (held-out data exceeding the training maxima).
pub fn count_above_one(scaled: &[[f64; TARGET_COUNT]]) -> usize {
    scaled.iter().flat_map(|r| r.iter()).filter(|&&v| v > 1.0).count()
}

/// Start offsets of length-`seq_len` windows advancing by `stride`; the
/// trailing remainder is dropped.
pub fn window_offsets(len: usize, seq_len: usize, stride: usize) -> Result<Vec<usize>, TrainError> {
    if seq_len == 0 || stride == 0 {
        return Err(TrainError::InvalidConfig("window length and stride must be positive"));
    }
    if len < seq_len {
        return Err(TrainError::SourceTooShort { len, seq_len });
    }
    Ok((0..=len - seq_len).step_by(stride).collect())
}

/// Sliding windows over already-normalized rows.
pub fn make_windows(
    features: &[[f64; FEATURE_COUNT]],
    targets: &[[f64; TARGET_COUNT]],
    seq_len: usize,
    stride: usize,
    subject_id: &str,
    session_label: &str,
) -> Result<Vec<TrainingSample>, TrainError> {
    if features.len() != targets.len() {
        return Err(TrainError::ShapeMismatch);
    }
    Ok(window_offsets(features.len(), seq_len, stride)?
        .into_iter()
        .map(|o| TrainingSample {
            x: Matrix::from_rows(&features[o..o + seq_len]),
            y: Matrix::from_rows(&targets[o..o + seq_len]),
            subject_id: subject_id.into(),
            session_label: session_label.into(),
            offset: o,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.7, val: 0.1, test: 0.2 }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<(), TrainError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(TrainError::InvalidConfig("split fractions must lie in [0,1] and sum to 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Items that carry the subject used for stratification.
pub trait Stratified {
    fn subject(&self) -> &str;
}

impl Stratified for TrainingSample {
    fn subject(&self) -> &str {
        &self.subject_id
    }
}

/// Seeded split stratified by subject: each subject's items are shuffled
/// and cut into `round(f_train·n)`, `round(f_val·n)` and the remainder.
/// Within each part items keep their input order.
pub fn split_dataset<T: Stratified>(items: Vec<T>, fractions: SplitFractions, seed: u64) -> Result<Split<T>, TrainError> {
    fractions.validate()?;
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        by_subject.entry(it.subject()).or_default().push(i);
    }
    let mut part = alloc::vec![0u8; items.len()];
    for (s, (_, mut idx)) in by_subject.into_iter().enumerate() {
        let mut rng = SeqRng::new(seed, s as u64);
        rng.shuffle(&mut idx);
        let n = idx.len() as f64;
        let n_train = libm::round(fractions.train * n) as usize;
        let n_val = (libm::round(fractions.val * n) as usize).min(idx.len() - n_train.min(idx.len()));
        for (k, &i) in idx.iter().enumerate() {
            part[i] = if k < n_train {
                0
            } else if k < n_train + n_val {
                1
            } else {
                2
            };
        }
    }
    let mut split = Split { train: Vec::new(), val: Vec::new(), test: Vec::new() };
    for (it, p) in items.into_iter().zip(part) {
        match p {
            0 => split.train.push(it),
            1 => split.val.push(it),
            _ => split.test.push(it),
        }
    }
    for (name, len, wanted) in [
        ("train", split.train.len(), fractions.train),
        ("val", split.val.len(), fractions.val),
        ("test", split.test.len(), fractions.test),
    ] {
        if len == 0 && wanted > 0.0 {
            return Err(TrainError::EmptySplit(name));
        }
    }
    Ok(split)
}

/// Feature statistics per subject, plus pooled statistics for subjects
/// never seen in training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalization {
    pub per_subject: BTreeMap<String, FeatureStats>,
    pub pooled: FeatureStats,
}

impl FeatureNormalization {
    pub fn stats_for(&self, subject: &str) -> &FeatureStats {
        self.per_subject.get(subject).unwrap_or(&self.pooled)
    }

    pub fn apply(&self, subject: &str, rows: &[[f64; FEATURE_COUNT]]) -> Vec<[f64; FEATURE_COUNT]> {
        let s = self.stats_for(subject);
        rows.iter().map(|r| s.apply(r)).collect()
    }
}

/// Normalized train/val/test windows with the statistics fit on the
/// training windows only.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub split: Split<TrainingSample>,
    pub features: FeatureNormalization,
    pub targets: TargetScaling,
    pub seq_len: usize,
}

#[derive(Debug, Clone, Copy)]
struct WindowRef<'a> {
    rec: usize,
    offset: usize,
    subject: &'a str,
}

impl Stratified for WindowRef<'_> {
    fn subject(&self) -> &str {
        self.subject
    }
}

/// Windows every recording, splits the windows (stratified by subject),
/// fits per-subject feature statistics and target maxima on rows covered by
/// training windows, then normalizes all three parts with them.
pub fn prepare_dataset(
    recordings: &[Recording],
    seq_len: usize,
    stride: usize,
    fractions: SplitFractions,
    seed: u64,
) -> Result<PreparedData, TrainError> {
    let mut refs = Vec::new();
    for (ri, rec) in recordings.iter().enumerate() {
        rec.check()?;
        for offset in window_offsets(rec.len(), seq_len, stride)? {
            refs.push(WindowRef { rec: ri, offset, subject: &rec.subject_id });
        }
    }
    let split = split_dataset(refs, fractions, seed)?;

    let mut covered: BTreeSet<(usize, usize)> = BTreeSet::new();
    for w in &split.train {
        covered.extend((w.offset..w.offset + seq_len).map(|r| (w.rec, r)));
    }
    let (features, targets) = fit_normalization(recordings, covered.iter().copied())?;
    let materialize = |ws: &[WindowRef<'_>]| -> Vec<TrainingSample> {
        ws.iter().map(|w| window_sample(&recordings[w.rec], w.offset, seq_len, &features, &targets)).collect()
    };
    Ok(PreparedData {
        split: Split { train: materialize(&split.train), val: materialize(&split.val), test: materialize(&split.test) },
        features,
        targets,
        seq_len,
    })
}

/// Fits normalization on the given `(recording, row)` pairs.
pub fn fit_normalization(
    recordings: &[Recording],
    rows: impl Iterator<Item = (usize, usize)> + Clone,
) -> Result<(FeatureNormalization, TargetScaling), TrainError> {
    let mut by_subject: BTreeMap<&str, Vec<[f64; FEATURE_COUNT]>> = BTreeMap::new();
    for (ri, r) in rows.clone() {
        let rec = &recordings[ri];
        by_subject.entry(&rec.subject_id).or_default().push(rec.features[r]);
    }
    let all: Vec<[f64; FEATURE_COUNT]> = rows.clone().map(|(ri, r)| recordings[ri].features[r]).collect();
    let pooled = FeatureStats::from_rows(all.iter()).map_err(feature_err)?;
    let mut per_subject = BTreeMap::new();
    for (s, v) in by_subject {
        // a subject whose training rows are constant in some feature falls back to pooled stats
        if let Ok(st) = FeatureStats::from_rows(v.iter()) {
            per_subject.insert(String::from(s), st);
        }
    }
    let target_rows: Vec<[f64; TARGET_COUNT]> = rows.map(|(ri, r)| recordings[ri].targets[r]).collect();
    let targets = TargetScaling::fit(target_rows.iter())?;
    Ok((FeatureNormalization { per_subject, pooled }, targets))
}

fn feature_err(e: FeatureError) -> TrainError {
    match e {
        FeatureError::DegenerateFeature(k) => TrainError::DegenerateFeature(k),
        _ => TrainError::EmptySplit("train"),
    }
}

/// One normalized window of `rec`.
pub fn window_sample(
    rec: &Recording,
    offset: usize,
    seq_len: usize,
    features: &FeatureNormalization,
    targets: &TargetScaling,
) -> TrainingSample {
    let stats = features.stats_for(&rec.subject_id);
    let x: Vec<[f64; FEATURE_COUNT]> = rec.features[offset..offset + seq_len].iter().map(|r| stats.apply(r)).collect();
    let y: Vec<[f64; TARGET_COUNT]> = rec.targets[offset..offset + seq_len].iter().map(|r| targets.apply(r)).collect();
    TrainingSample {
        x: Matrix::from_rows(&x),
        y: Matrix::from_rows(&y),
        subject_id: rec.subject_id.clone(),
        session_label: rec.session_label.clone(),
        offset,
    }
}

/// Windows of `rec` normalized with existing statistics.
pub fn windows_with(
    rec: &Recording,
    seq_len: usize,
    stride: usize,
    features: &FeatureNormalization,
    targets: &TargetScaling,
) -> Result<Vec<TrainingSample>, TrainError> {
    rec.check()?;
    Ok(window_offsets(rec.len(), seq_len, stride)?
        .into_iter()
        .map(|o| window_sample(rec, o, seq_len, features, targets))
        .collect())
}
