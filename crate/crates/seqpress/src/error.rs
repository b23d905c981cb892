use std::path::{Path, PathBuf};

use seqpress_core::baselines::BaselineError;
use seqpress_core::bptt::BpttError;
use seqpress_core::eval::EvalError;
use seqpress_core::features::FeatureError;
use seqpress_core::rnn::RnnError;
use seqpress_core::synth::SynthError;
use seqpress_core::train::TrainError;

/// Process exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Bptt(#[from] BpttError),
    #[error(transparent)]
    Rnn(#[from] RnnError),
}

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, msg: impl Into<String>) -> Self {
        Self::Format { path: path.to_path_buf(), msg: msg.into() }
    }

    /// 1 for usage errors, 3 for numerical failures, 2 for everything
    /// else (missing or malformed data).
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) | Self::Synth(_) => EXIT_USAGE,
            Self::Numerical(_) => EXIT_NUMERICAL,
            Self::Train(e) => train_code(e),
            Self::Eval(EvalError::Train(e)) => train_code(e),
            Self::Eval(EvalError::Baseline(BaselineError::SingularCovariance))
            | Self::Baseline(BaselineError::SingularCovariance) => EXIT_NUMERICAL,
            Self::Rnn(e) | Self::Bptt(BpttError::Rnn(e)) => rnn_code(e),
            Self::Bptt(BpttError::InvalidEpsilon(_)) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }
}

fn train_code(e: &TrainError) -> u8 {
    match e {
        TrainError::DivergedLoss { .. } => EXIT_NUMERICAL,
        TrainError::InvalidConfig(_) => EXIT_USAGE,
        TrainError::Rnn(e) | TrainError::Bptt(BpttError::Rnn(e)) => rnn_code(e),
        _ => EXIT_DATA,
    }
}

fn rnn_code(e: &RnnError) -> u8 {
    match e {
        RnnError::NonFiniteActivation { .. } => EXIT_NUMERICAL,
        RnnError::InvalidConfig(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

pub type Result<T, E = AppError> = std::result::Result<T, E>;
