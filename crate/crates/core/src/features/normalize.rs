use serde::{Deserialize, Serialize};

use crate::math::sqrt;
use crate::FEATURE_COUNT;

use super::{FeatureError, FeatureSequence};

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: [f64; FEATURE_COUNT],
    pub std: [f64; FEATURE_COUNT],
}

impl FeatureStats {
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a [f64; FEATURE_COUNT]> + Clone) -> Result<Self, FeatureError> {
        let mut n = 0usize;
        let mut mean = [0.0; FEATURE_COUNT];
        for r in rows.clone() {
            n += 1;
            for k in 0..FEATURE_COUNT {
                mean[k] += r[k];
            }
        }
        if n == 0 {
            return Err(FeatureError::InsufficientBeats);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = [0.0; FEATURE_COUNT];
        for r in rows {
            for k in 0..FEATURE_COUNT {
                let d = r[k] - mean[k];
                var[k] += d * d;
            }
        }
        let mut std = [0.0; FEATURE_COUNT];
        for k in 0..FEATURE_COUNT {
            std[k] = sqrt(var[k] / n as f64);
        }
        let stats = Self { mean, std };
        stats.check()?;
        Ok(stats)
    }

    fn check(&self) -> Result<(), FeatureError> {
        match self.std.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            Some(k) => Err(FeatureError::DegenerateFeature(k)),
            None => Ok(()),
        }
    }

    pub fn apply(&self, row: &[f64; FEATURE_COUNT]) -> [f64; FEATURE_COUNT] {
        core::array::from_fn(|k| (row[k] - self.mean[k]) / self.std[k])
    }

    pub fn invert(&self, row: &[f64; FEATURE_COUNT]) -> [f64; FEATURE_COUNT] {
        core::array::from_fn(|k| row[k] * self.std[k] + self.mean[k])
    }
}

/// Z-scores every feature column, with `stats` if given or else statistics
/// of `raw` itself. The statistics used are stored on the result.
pub fn normalize_features(raw: &FeatureSequence, stats: Option<&FeatureStats>) -> Result<FeatureSequence, FeatureError> {
    let stats = match stats {
        Some(s) => {
            s.check()?;
            *s
        }
        None => FeatureStats::from_rows(raw.values.iter())?,
    };
    Ok(FeatureSequence {
        times: raw.times.clone(),
        values: raw.values.iter().map(|r| stats.apply(r)).collect(),
        normalization: Some(stats),
        subject_id: raw.subject_id.clone(),
        session_label: raw.session_label.clone(),
    })
}
