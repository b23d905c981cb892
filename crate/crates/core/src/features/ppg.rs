use alloc::vec::Vec;

use crate::FEATURE_COUNT;

use super::ecg::{argmax, argmin, detect_ecg_r_peaks};
use super::{
    check_rate, trapezoid, BeatFiducials, FeatureError, FeatureSequence, FeatureVector, Fiducial, FiducialSamples,
    QualityIssue,
};

/// Fiducials of every complete beat plus the log of skipped/flagged beats.
#[derive(Debug, Clone, PartialEq)]
pub struct FiducialScan {
    pub beats: Vec<BeatFiducials>,
    pub quality: Vec<QualityIssue>,
}

/// Locates per-beat PPG landmarks given the R-peak times.
///
/// * maximum slope: largest central-difference derivative in `[R_n, R_{n+1})`
/// * foot `tf`: PPG minimum between the previous beat's maximum slope (or
///   `R_n` for the first beat) and this beat's maximum slope
/// * systolic peak `tp`: first local maximum after `tf`
/// * notch `tn`: most prominent local minimum between `tp` and the next foot
/// * reflection peak: first local maximum after `tn`
///
/// `a` and `b` are the systolic and reflection peak heights above the foot.
/// The last beat is dropped because its successor foot is unknown. Beats
/// with a missing landmark are skipped and logged.
pub fn detect_ppg_fiducials(ppg: &[f64], sample_rate: f64, r_peaks: &[f64]) -> Result<FiducialScan, FeatureError> {
    check_rate(sample_rate)?;
    if r_peaks.len() < 2 {
        return Err(FeatureError::NoBeatsDetected);
    }
    if ppg.len() < 3 {
        return Err(FeatureError::SignalTooShort { needed_seconds: 3.0 / sample_rate });
    }
    if ppg.iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::NonFinite);
    }
    let n = ppg.len();
    let r_idx: Vec<usize> = r_peaks.iter().map(|t| (libm::round(t * sample_rate).max(0.0) as usize).min(n - 1)).collect();

    let max_slope: Vec<Option<usize>> = (0..r_idx.len())
        .map(|k| {
            let lo = r_idx[k].max(1);
            let hi = r_idx.get(k + 1).copied().unwrap_or(n).min(n - 1);
            (lo < hi).then(|| {
                let slopes: Vec<f64> = (lo..hi).map(|i| ppg[i + 1] - ppg[i - 1]).collect();
                argmax(&slopes) + lo
            })
        })
        .collect();

    let foot: Vec<Option<usize>> = (0..r_idx.len())
        .map(|k| {
            let ms = max_slope[k]?;
            let lo = match k.checked_sub(1).and_then(|p| max_slope[p]) {
                Some(prev) => prev,
                None => r_idx[k].min(ms),
            };
            Some(argmin(&ppg[lo..=ms]) + lo)
        })
        .collect();

    let mut scan = FiducialScan { beats: Vec::new(), quality: Vec::new() };
    for k in 0..r_idx.len() - 1 {
        match beat_fiducials(ppg, sample_rate, k, &r_idx, &max_slope, &foot) {
            Ok(b) => {
                if b.b > b.a {
                    scan.quality.push(QualityIssue::ReflectionAboveSystolic { beat_index: k, ri: b.b / b.a });
                }
                scan.beats.push(b);
            }
            Err(fiducial) => scan.quality.push(QualityIssue::Missing { beat_index: k, fiducial }),
        }
    }
    Ok(scan)
}

fn beat_fiducials(
    ppg: &[f64],
    fs: f64,
    k: usize,
    r_idx: &[usize],
    max_slope: &[Option<usize>],
    foot: &[Option<usize>],
) -> Result<BeatFiducials, Fiducial> {
    let ms = max_slope[k].ok_or(Fiducial::MaxSlope)?;
    let tf = foot[k].ok_or(Fiducial::Foot)?;
    let tf_next = foot[k + 1].ok_or(Fiducial::Foot)?;
    if tf_next <= tf + 2 {
        return Err(Fiducial::Foot);
    }
    let tp = (tf + 1..tf_next).find(|&i| is_local_max(ppg, i)).ok_or(Fiducial::SystolicPeak)?;
    let tn = most_prominent_min(ppg, tp, tf_next).ok_or(Fiducial::Notch)?;
    let refl = (tn + 1..tf_next).find(|&i| is_local_max(ppg, i)).ok_or(Fiducial::ReflectionPeak)?;
    let base = ppg[tf];
    let a = ppg[tp] - base;
    if a <= 0.0 {
        return Err(Fiducial::Amplitude);
    }
    let t = |i: usize| i as f64 / fs;
    Ok(BeatFiducials {
        beat_index: k,
        r_peak_t: t(r_idx[k]),
        r_next_t: t(r_idx[k + 1]),
        max_slope_t: t(ms),
        tf: t(tf),
        tp: t(tp),
        tn: t(tn),
        tf_next: t(tf_next),
        a,
        b: ppg[refl] - base,
        samples: FiducialSamples { r_peak: r_idx[k], max_slope: ms, tf, tp, tn, reflection: refl, tf_next },
    })
}

#[inline]
fn is_local_max(x: &[f64], i: usize) -> bool {
    i > 0 && i + 1 < x.len() && x[i] >= x[i - 1] && x[i] > x[i + 1]
}

#[inline]
fn is_local_min(x: &[f64], i: usize) -> bool {
    i > 0 && i + 1 < x.len() && x[i] <= x[i - 1] && x[i] < x[i + 1]
}

/// Local minimum in `(from, to)` maximizing
/// `min(max left of it, max right of it) − value`.
fn most_prominent_min(x: &[f64], from: usize, to: usize) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in from + 1..to {
        if !is_local_min(x, i) {
            continue;
        }
        let left = x[from..=i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let right = x[i..=to].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let prominence = left.min(right) - x[i];
        if best.is_none_or(|(_, p)| prominence > p) {
            best = Some((i, prominence));
        }
    }
    best.map(|(i, _)| i)
}

/// Features of one beat from its fiducials; areas use the trapezoidal rule
/// on the PPG minus its value at the foot.
pub fn beat_features(ppg: &[f64], sample_rate: f64, beat: &BeatFiducials) -> FeatureVector {
    let s = &beat.samples;
    let dt = 1.0 / sample_rate;
    let base = ppg[s.tf];
    FeatureVector {
        ptt_s: beat.max_slope_t - beat.r_peak_t,
        hr: 60.0 / (beat.r_next_t - beat.r_peak_t),
        ri: beat.b / beat.a,
        st: beat.tn - beat.tf,
        up_time: beat.tp - beat.tf,
        sv: trapezoid(ppg, s.tf, s.tn, base, dt),
        dv: trapezoid(ppg, s.tn, s.tf_next, base, dt),
    }
}

/// Output of [`extract_features`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtraction {
    /// Unnormalized features, one row per beat, timed at the R peak.
    pub features: FeatureSequence,
    pub fiducials: Vec<BeatFiducials>,
    pub r_peaks: Vec<f64>,
    pub quality: Vec<QualityIssue>,
}

/// R peaks → PPG fiducials → one feature vector per complete beat.
pub fn extract_features(ecg: &[f64], ppg: &[f64], sample_rate: f64) -> Result<FeatureExtraction, FeatureError> {
    check_rate(sample_rate)?;
    if ecg.len().abs_diff(ppg.len()) > 1 {
        return Err(FeatureError::LengthMismatch { ecg: ecg.len(), ppg: ppg.len() });
    }
    let r_peaks = detect_ecg_r_peaks(ecg, sample_rate)?;
    let scan = detect_ppg_fiducials(ppg, sample_rate, &r_peaks)?;
    if scan.beats.is_empty() {
        return Err(FeatureError::InsufficientBeats);
    }
    let mut times = Vec::with_capacity(scan.beats.len());
    let mut values: Vec<[f64; FEATURE_COUNT]> = Vec::with_capacity(scan.beats.len());
    for b in &scan.beats {
        times.push(b.r_peak_t);
        values.push(beat_features(ppg, sample_rate, b).to_array());
    }
    Ok(FeatureExtraction {
        features: FeatureSequence::raw(times, values),
        fiducials: scan.beats,
        r_peaks,
        quality: scan.quality,
    })
}
