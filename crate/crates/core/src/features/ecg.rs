use alloc::vec::Vec;

use super::{check_rate, FeatureError};

/// Minimum spacing between accepted R peaks.
pub const REFRACTORY_SECONDS: f64 = 0.25;

const MIN_SECONDS: f64 = 2.0;
const INTEGRATION_SECONDS: f64 = 0.06;
const REFINE_SECONDS: f64 = 0.05;

/// R-peak times (seconds) from a single ECG lead.
///
/// The signal is differentiated (central difference), squared and
/// integrated over a short centered window; local maxima of that envelope
/// are accepted against an adaptive threshold `npk + 0.25·(spk − npk)`
/// with running signal/noise peak levels, then refined to the raw-signal
/// maximum nearby. Peaks closer than [`REFRACTORY_SECONDS`] to the last
/// accepted one are ignored.
pub fn detect_ecg_r_peaks(ecg: &[f64], sample_rate: f64) -> Result<Vec<f64>, FeatureError> {
    check_rate(sample_rate)?;
    if (ecg.len() as f64) / sample_rate < MIN_SECONDS {
        return Err(FeatureError::SignalTooShort { needed_seconds: MIN_SECONDS });
    }
    if ecg.iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::NonFinite);
    }
    let n = ecg.len();
    let last = n - 1;
    let energy: Vec<f64> = (0..n)
        .map(|k| {
            let d = ecg[(k + 1).min(last)] - ecg[k.saturating_sub(1)];
            d * d
        })
        .collect();

    let half = ((INTEGRATION_SECONDS * sample_rate) / 2.0) as usize;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for e in &energy {
        prefix.push(prefix.last().copied().unwrap_or(0.0) + e);
    }
    let envelope: Vec<f64> = (0..n)
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half).min(last);
            (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64
        })
        .collect();

    let warmup = ((MIN_SECONDS * sample_rate) as usize).min(n);
    let mut spk = envelope[..warmup].iter().copied().fold(0.0, f64::max);
    let mut npk = 0.0;
    let refractory = libm::ceil(REFRACTORY_SECONDS * sample_rate) as usize;
    let refine = ((REFINE_SECONDS * sample_rate) as usize).max(1);
    let mut peaks: Vec<usize> = Vec::new();

    for k in 0..n {
        let e = envelope[k];
        let rising = k == 0 || e > envelope[k - 1];
        let falling = k == last || e >= envelope[k + 1];
        if !(rising && falling) || e <= 0.0 {
            continue;
        }
        let threshold = npk + 0.25 * (spk - npk);
        if e > threshold {
            let lo = k.saturating_sub(refine);
            let hi = (k + refine).min(last);
            let r = argmax(&ecg[lo..=hi]) + lo;
            if let Some(&prev) = peaks.last() {
                if r < prev + refractory {
                    continue;
                }
            }
            peaks.push(r);
            spk = 0.125 * e + 0.875 * spk;
        } else {
            npk = 0.125 * e + 0.875 * npk;
        }
    }

    if peaks.len() < 2 {
        return Err(FeatureError::NoBeatsDetected);
    }
    Ok(peaks.into_iter().map(|p| p as f64 / sample_rate).collect())
}

/// First index of the maximum.
pub(crate) fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

/// First index of the minimum.
pub(crate) fn argmin(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v < x[best] {
            best = i;
        }
    }
    best
}
