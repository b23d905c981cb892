//! Per-beat ECG/PPG feature extraction.
//!
//! A beat runs from one ECG R peak to the next. Inside it the PPG supplies
//! the maximum-slope point, the foot (`tf`), systolic peak (`tp`), dicrotic
//! notch (`tn`) and the reflection peak after the notch. Seven features are
//! derived per beat: PTT to maximum slope, heart rate, reflection index
//! `b/a`, systolic timespan `tn − tf`, up time `tp − tf`, and the systolic
//! / diastolic areas of the foot-baseline-subtracted PPG.

mod ecg;
mod normalize;
mod ppg;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::FEATURE_COUNT;

pub use ecg::{detect_ecg_r_peaks, REFRACTORY_SECONDS};
pub use normalize::{normalize_features, FeatureStats};
pub use ppg::{beat_features, detect_ppg_fiducials, extract_features, FeatureExtraction, FiducialScan};

/// Column names in feature order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = ["ptt_s", "hr", "ri", "st", "up_time", "sv", "dv"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("sample rate must be positive and finite, got {0}")]
    InvalidSampleRate(f64),
    #[error("signal shorter than {needed_seconds} s")]
    SignalTooShort { needed_seconds: f64 },
    #[error("ECG and PPG lengths differ: {ecg} vs {ppg} samples")]
    LengthMismatch { ecg: usize, ppg: usize },
    #[error("fewer than two R peaks detected")]
    NoBeatsDetected,
    #[error("no {fiducial:?} found in beat {beat_index}")]
    FiducialNotFound { beat_index: usize, fiducial: Fiducial },
    #[error("no complete beat with valid fiducials")]
    InsufficientBeats,
    #[error("feature {0} has zero variance")]
    DegenerateFeature(usize),
    #[error("non-finite sample in input")]
    NonFinite,
}

/// Landmark kinds, used in quality-log entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fiducial {
    MaxSlope,
    Foot,
    SystolicPeak,
    Notch,
    ReflectionPeak,
    /// Systolic amplitude `a` not positive.
    Amplitude,
}

/// Non-fatal per-beat problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QualityIssue {
    /// The beat was skipped.
    Missing { beat_index: usize, fiducial: Fiducial },
    /// `b/a > 1`; the beat is kept.
    ReflectionAboveSystolic { beat_index: usize, ri: f64 },
}

/// Raw two-channel recording.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformRecord {
    pub ecg: Vec<f64>,
    pub ppg: Vec<f64>,
    pub sample_rate: f64,
    pub subject_id: String,
    pub session_label: String,
}

impl WaveformRecord {
    /// Checks the record invariants: positive rate, non-empty channels of
    /// equal duration within one sample.
    pub fn validate(&self) -> Result<(), FeatureError> {
        check_rate(self.sample_rate)?;
        if self.ecg.is_empty() || self.ppg.is_empty() {
            return Err(FeatureError::SignalTooShort { needed_seconds: 1.0 / self.sample_rate });
        }
        if self.ecg.len().abs_diff(self.ppg.len()) > 1 {
            return Err(FeatureError::LengthMismatch { ecg: self.ecg.len(), ppg: self.ppg.len() });
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.ecg.len() as f64 / self.sample_rate
    }
}

/// Sample indices of the landmarks of one beat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiducialSamples {
    pub r_peak: usize,
    pub max_slope: usize,
    pub tf: usize,
    pub tp: usize,
    pub tn: usize,
    pub reflection: usize,
    pub tf_next: usize,
}

/// Landmarks of one beat, times in seconds from the record start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatFiducials {
    pub beat_index: usize,
    pub r_peak_t: f64,
    /// R peak of the following beat; the R–R interval sets the heart rate.
    pub r_next_t: f64,
    pub max_slope_t: f64,
    pub tf: f64,
    pub tp: f64,
    pub tn: f64,
    /// Foot of the following beat, where the diastolic area ends.
    pub tf_next: f64,
    /// Systolic peak height above the foot.
    pub a: f64,
    /// Reflection peak height above the foot.
    pub b: f64,
    pub samples: FiducialSamples,
}

/// The seven features of one beat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Seconds from R peak to PPG maximum slope.
    pub ptt_s: f64,
    /// Beats per minute.
    pub hr: f64,
    pub ri: f64,
    pub st: f64,
    pub up_time: f64,
    pub sv: f64,
    pub dv: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [self.ptt_s, self.hr, self.ri, self.st, self.up_time, self.sv, self.dv]
    }

    pub fn from_array(a: [f64; FEATURE_COUNT]) -> Self {
        Self { ptt_s: a[0], hr: a[1], ri: a[2], st: a[3], up_time: a[4], sv: a[5], dv: a[6] }
    }
}

/// `T × 7` feature matrix, one row per beat, with the statistics used to
/// normalize it (absent for raw features).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    /// Beat time (R peak) of each row, seconds.
    pub times: Vec<f64>,
    pub values: Vec<[f64; FEATURE_COUNT]>,
    pub normalization: Option<FeatureStats>,
    pub subject_id: String,
    pub session_label: String,
}

impl FeatureSequence {
    pub fn raw(times: Vec<f64>, values: Vec<[f64; FEATURE_COUNT]>) -> Self {
        Self { times, values, normalization: None, subject_id: String::new(), session_label: String::new() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[k]).collect()
    }
}

pub(crate) fn check_rate(sample_rate: f64) -> Result<(), FeatureError> {
    if sample_rate > 0.0 && sample_rate.is_finite() {
        Ok(())
    } else {
        Err(FeatureError::InvalidSampleRate(sample_rate))
    }
}

/// Trapezoidal integral of `signal[from..=to] − baseline`, times `dt`.
pub(crate) fn trapezoid(signal: &[f64], from: usize, to: usize, baseline: f64, dt: f64) -> f64 {
    let mut acc = 0.0;
    for k in from..to {
        acc += 0.5 * ((signal[k] - baseline) + (signal[k + 1] - baseline));
    }
    acc * dt
}
