//! TOML run configuration.
//!
//! Every table is optional and every key inside falls back to its default.
//! Keys mirror the field names of the corresponding core types:
//!
//! ```toml
//! [network]
//! hidden_size = 128
//! num_layers = 4
//! seq_len = 32
//!
//! [train]
//! learning_rate = 1e-3
//! max_epochs = 500
//!
//! [synth]
//! num_subjects = 4
//!
//! [waveform_synth]
//! sample_rate = 1000.0
//!
//! [baseline]
//! calibration_beats = 60
//! ridge_alpha = 1.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use seqpress_core::baselines::{DEFAULT_CALIBRATION_BEATS, DEFAULT_RIDGE_ALPHA};
use seqpress_core::rnn::NetworkConfig;
use seqpress_core::synth::{SynthConfig, WaveformSynthConfig};
use seqpress_core::train::TrainConfig;

use crate::error::{AppError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub calibration_beats: usize,
    pub ridge_alpha: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { calibration_beats: DEFAULT_CALIBRATION_BEATS, ridge_alpha: DEFAULT_RIDGE_ALPHA }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub waveform_synth: WaveformSynthConfig,
    pub baseline: BaselineConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::from_toml(&text).map_err(|m| AppError::format(path, m))
    }

    /// Loads `path` when given, defaults otherwise, then applies `seed` to
    /// every section that has one.
    pub fn resolve(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(s) = seed {
            cfg.train.seed = s;
            cfg.synth.seed = s;
            cfg.waveform_synth.seed = s;
        }
        Ok(cfg)
    }
}
