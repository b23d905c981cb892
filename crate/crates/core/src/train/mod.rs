//! Mini-batch training with clipped Adam, early stopping, and the
//! pre-train / fine-tune schedule.

pub mod data;
pub mod loss;
pub mod optim;

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::bptt::{deeprnn_backward_into, BpttError, Gradients};
use crate::math::Matrix;
use crate::rng::SeqRng;
use crate::rnn::{deeprnn_forward, NetworkConfig, NetworkParams, RnnError};
use crate::{FEATURE_COUNT, TARGET_COUNT};

pub use data::{
    count_above_one, make_windows, normalize_targets, prepare_dataset, split_dataset, FeatureNormalization, PreparedData, Recording,
    Split, SplitFractions, TargetScaling, TrainingSample,
};
pub use loss::{batch_loss, loss_gradient, mean_squared_error, multitask_loss, sample_loss, ChannelMask, ALL_CHANNELS};
pub use optim::{adam_step, clip_gradients, AdamHyper, AdamState};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("prediction and target shapes differ")]
    ShapeMismatch,
    #[error("target value {0} is not positive")]
    NonPositiveTarget(f64),
    #[error("sequence of {len} rows is shorter than the window length {seq_len}")]
    SourceTooShort { len: usize, seq_len: usize },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("feature {0} has zero variance in the training rows")]
    DegenerateFeature(usize),
    #[error("loss became non-finite at epoch {epoch}, step {step}")]
    DivergedLoss { epoch: usize, step: usize },
    #[error(transparent)]
    Rnn(#[from] RnnError),
    #[error(transparent)]
    Bptt(#[from] BpttError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub clip_norm: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    /// Stop after this many optimizer steps, if set.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    /// Window stride; half the window length when unset.
    pub stride: Option<usize>,
    pub finetune_lr_factor: f64,
    /// Leading share of each day-1 recording used for fine-tuning.
    pub finetune_fraction: f64,
    pub finetune_epochs: usize,
    /// Output channels in the loss; all three for multi-task training.
    pub channels: ChannelMask,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            clip_norm: 5.0,
            lambda: 1e-4,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            max_epochs: 500,
            early_stop_patience: 20,
            max_steps: None,
            seed: 0,
            train_fraction: 0.7,
            val_fraction: 0.1,
            test_fraction: 0.2,
            stride: None,
            finetune_lr_factor: 0.1,
            finetune_fraction: 0.5,
            finetune_epochs: 100,
            channels: ALL_CHANNELS,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamHyper {
        AdamHyper { beta1: self.adam_beta1, beta2: self.adam_beta2, epsilon: self.adam_epsilon }
    }

    pub fn fractions(&self) -> SplitFractions {
        SplitFractions { train: self.train_fraction, val: self.val_fraction, test: self.test_fraction }
    }

    pub fn stride_for(&self, seq_len: usize) -> usize {
        self.stride.unwrap_or((seq_len / 2).max(1))
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be positive"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(TrainError::InvalidConfig("clip_norm must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(self.lambda >= 0.0) {
            return Err(TrainError::InvalidConfig("learning_rate must be positive and lambda non-negative"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_epsilon > 0.0) {
            return Err(TrainError::InvalidConfig("Adam hyperparameters out of range"));
        }
        if !(self.finetune_fraction > 0.0 && self.finetune_fraction < 1.0) {
            return Err(TrainError::InvalidConfig("finetune_fraction must lie in (0, 1)"));
        }
        if !self.channels.iter().any(|&c| c) {
            return Err(TrainError::InvalidConfig("at least one output channel must be trained"));
        }
        if self.stride == Some(0) {
            return Err(TrainError::InvalidConfig("stride must be positive"));
        }
        self.fractions().validate()
    }
}

/// Per-sample work for one batch, run over a contiguous index range. The
/// closure accumulates parameter gradients into its buffer and returns the
/// summed data loss.
pub type ChunkJob<'a> = dyn Fn(Range<usize>, &mut Gradients) -> Result<f64, TrainError> + Sync + 'a;

/// Strategy for spreading per-sample work. Results must be reduced in a
/// fixed order so runs stay reproducible.
pub trait BatchExecutor: Sync {
    /// Runs `job` over `0..n` and returns the loss sum and gradient sum.
    fn accumulate(&self, n: usize, template: &Gradients, job: &ChunkJob<'_>) -> Result<(f64, Gradients), TrainError>;

    /// Evaluates `f` for every index in `0..n`, in index order.
    fn map(&self, n: usize, f: &(dyn Fn(usize) -> Result<f64, TrainError> + Sync)) -> Result<Vec<f64>, TrainError>;
}

/// Single-threaded executor.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl BatchExecutor for Sequential {
    fn accumulate(&self, n: usize, template: &Gradients, job: &ChunkJob<'_>) -> Result<(f64, Gradients), TrainError> {
        let mut g = template.zeros_like();
        let loss = job(0..n, &mut g)?;
        Ok((loss, g))
    }

    fn map(&self, n: usize, f: &(dyn Fn(usize) -> Result<f64, TrainError> + Sync)) -> Result<Vec<f64>, TrainError> {
        (0..n).map(f).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean objective (data term plus penalty) over the epoch's steps.
    pub train_loss: f64,
    /// Mean per-sequence squared error on the validation windows.
    pub val_loss: f64,
    /// Mean gradient norm before clipping.
    pub grad_norm_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss seen (the last ones when
    /// there is no validation data).
    pub params: NetworkParams,
    pub history: Vec<EpochRecord>,
    /// 0 when no epoch improved on the initial parameters.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub steps: usize,
}

/// Everything needed to reproduce predictions in mmHg.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub features: FeatureNormalization,
    pub targets: TargetScaling,
    pub train_config: TrainConfig,
    pub history: Vec<EpochRecord>,
}

/// Mean masked per-sequence loss of `net` over `samples`.
pub fn evaluate_loss(
    net: &NetworkParams,
    samples: &[TrainingSample],
    mask: &ChannelMask,
    exec: &dyn BatchExecutor,
) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let losses = exec.map(samples.len(), &|i| {
        let s = &samples[i];
        let (z, _) = deeprnn_forward(net, &s.x, false)?;
        Ok(sample_loss(&z, &s.y, Some(mask)))
    })?;
    Ok(losses.iter().sum::<f64>() / samples.len() as f64)
}

/// Loss and gradient of one mini-batch, including the weight penalty.
pub fn batch_gradient(
    net: &NetworkParams,
    batch: &[&TrainingSample],
    lambda: f64,
    mask: &ChannelMask,
    exec: &dyn BatchExecutor,
) -> Result<(f64, Gradients), TrainError> {
    let scale = 1.0 / batch.len() as f64;
    let job = |range: Range<usize>, g: &mut Gradients| -> Result<f64, TrainError> {
        let mut loss = 0.0;
        for s in &batch[range] {
            if s.x.cols() != FEATURE_COUNT || s.y.cols() != TARGET_COUNT || s.x.rows() != s.y.rows() {
                return Err(TrainError::ShapeMismatch);
            }
            let (z, cache) = deeprnn_forward(net, &s.x, true)?;
            let cache = cache.expect("training forward returns a cache");
            loss += sample_loss(&z, &s.y, Some(mask));
            let dz = loss_gradient(&z, &s.y, scale, Some(mask));
            deeprnn_backward_into(net, &cache, &dz, g)?;
        }
        Ok(loss)
    };
    let (data_loss, mut g) = exec.accumulate(batch.len(), net, &job)?;
    g.add_l2_gradient(net, lambda);
    Ok((data_loss * scale + lambda * net.weight_l2_sq(), g))
}

/// Trains from `init` until `max_epochs`, `max_steps`, or `patience`
/// epochs without validation improvement.
///
/// The effective batch size is `min(batch_size, train.len())`; a short
/// trailing batch in each epoch is dropped.
pub fn fit(
    config: &TrainConfig,
    init: NetworkParams,
    train: &[TrainingSample],
    val: &[TrainingSample],
    exec: &dyn BatchExecutor,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    init.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    let mask = config.channels;
    let batch = config.batch_size.min(train.len());
    let mut net = init;
    let mut adam = AdamState::for_params(&net, config.adam());
    let mut flat = net.to_flat();
    let mut rng = SeqRng::new(config.seed, 0x7472_6169_6e);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut best_val = evaluate_loss(&net, val, &mask, exec)?;
    let mut best = net.clone();
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut steps = 0usize;
    let mut history = Vec::new();

    'epochs: for epoch in 1..=config.max_epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut norm_sum = 0.0;
        let mut epoch_steps = 0usize;
        for chunk in order.chunks_exact(batch) {
            if config.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
            let members: Vec<&TrainingSample> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, mut g) = batch_gradient(&net, &members, config.lambda, &mask, exec)?;
            if !loss.is_finite() {
                return Err(TrainError::DivergedLoss { epoch, step: steps });
            }
            norm_sum += clip_gradients(&mut g, config.clip_norm);
            adam.step_slice(&mut flat, &g.to_flat(), config.learning_rate);
            net.load_flat(&flat)?;
            if !net.is_finite() {
                return Err(TrainError::DivergedLoss { epoch, step: steps });
            }
            loss_sum += loss;
            epoch_steps += 1;
            steps += 1;
        }
        if epoch_steps == 0 {
            break;
        }
        let val_loss = evaluate_loss(&net, val, &mask, exec)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / epoch_steps as f64,
            val_loss,
            grad_norm_mean: norm_sum / epoch_steps as f64,
        });
        if val.is_empty() {
            best = net.clone();
            best_epoch = epoch;
        } else if val_loss < best_val {
            best_val = val_loss;
            best = net.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.early_stop_patience {
                break 'epochs;
            }
        }
        if config.max_steps.is_some_and(|m| steps >= m) {
            break;
        }
    }
    Ok(TrainOutcome { params: best, history, best_epoch, best_val_loss: best_val, steps })
}

/// Initializes a network from `net_config` and `config.seed`, trains it on
/// the prepared split, and packages the result.
pub fn train(
    config: &TrainConfig,
    net_config: NetworkConfig,
    data: &PreparedData,
    exec: &dyn BatchExecutor,
) -> Result<Checkpoint, TrainError> {
    let init = NetworkParams::init(net_config, config.seed)?;
    let out = fit(config, init, &data.split.train, &data.split.val, exec)?;
    Ok(Checkpoint {
        params: out.params,
        features: data.features.clone(),
        targets: data.targets,
        train_config: config.clone(),
        history: out.history,
    })
}

impl Checkpoint {
    /// Predictions in mmHg for every row of `rec`.
    ///
    /// Long recordings are covered by windows of the configured length at
    /// a hop of half that length (plus one window flush with the end); each
    /// row takes its prediction from the window whose centre is nearest.
    /// Recordings no longer than one window run in a single pass.
    pub fn predict(&self, rec: &Recording) -> Result<Vec<[f64; TARGET_COUNT]>, TrainError> {
        let n = rec.len();
        let seq_len = self.params.config.seq_len.max(1);
        let rows = self.features.apply(&rec.subject_id, &rec.features);
        let run = |from: usize, to: usize| -> Result<Matrix, TrainError> {
            Ok(deeprnn_forward(&self.params, &Matrix::from_rows(&rows[from..to]), false)?.0)
        };
        let mut out = Vec::with_capacity(n);
        if n <= seq_len {
            if n > 0 {
                let z = run(0, n)?;
                out.extend((0..n).map(|t| self.row_mmhg(&z, t)));
            }
            return Ok(out);
        }
        let hop = (seq_len / 2).max(1);
        let mut offsets: Vec<usize> = (0..).map(|k| k * hop).take_while(|o| o + seq_len <= n).collect();
        if offsets.last() != Some(&(n - seq_len)) {
            offsets.push(n - seq_len);
        }
        let mut w = 0;
        let mut z = run(offsets[0], offsets[0] + seq_len)?;
        for r in 0..n {
            // twice the distance from row r to the centre of window k
            let dist = |k: usize| (2 * r + 1).abs_diff(2 * offsets[k] + seq_len);
            let mut next = w;
            while next + 1 < offsets.len() && dist(next + 1) < dist(next) {
                next += 1;
            }
            if next != w {
                w = next;
                z = run(offsets[w], offsets[w] + seq_len)?;
            }
            out.push(self.row_mmhg(&z, r - offsets[w]));
        }
        Ok(out)
    }

    fn row_mmhg(&self, z: &Matrix, t: usize) -> [f64; TARGET_COUNT] {
        self.targets.invert(&core::array::from_fn(|k| z.get(t, k)))
    }

    /// Per-channel RMSE in mmHg over every row of the given windows.
    pub fn window_rmse(&self, samples: &[TrainingSample]) -> Result<[f64; TARGET_COUNT], TrainError> {
        let mut acc = [0.0; TARGET_COUNT];
        let mut n = 0usize;
        for s in samples {
            let (z, _) = deeprnn_forward(&self.params, &s.x, false)?;
            for t in 0..z.rows() {
                for (k, a) in acc.iter_mut().enumerate() {
                    let d = (z.get(t, k) - s.y.get(t, k)) * self.targets.max[k];
                    *a += d * d;
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(TrainError::EmptySplit("evaluation"));
        }
        Ok(acc.map(|a| libm::sqrt(a / n as f64)))
    }
}

/// Result of pre-training on static recordings then fine-tuning on the
/// leading part of day-1 recordings.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainFinetune {
    pub pretrained: Checkpoint,
    pub finetuned: Checkpoint,
    /// Trailing part of each day-1 recording, never seen in training.
    pub day1_holdout: Vec<Recording>,
    /// Validation loss on the fine-tune validation windows before and after.
    pub finetune_val_before: f64,
    pub finetune_val_after: f64,
}

/// Pre-trains on `static_recordings`, then continues from those weights
/// with a fresh optimizer and `learning_rate · finetune_lr_factor` on the
/// first `finetune_fraction` of each day-1 recording. The last fifth of the
/// fine-tune windows (in time order) is used for early stopping.
/// Normalization statistics come from the pre-training data throughout.
pub fn pretrain_finetune(
    static_recordings: &[Recording],
    day1: &[Recording],
    net_config: NetworkConfig,
    config: &TrainConfig,
    exec: &dyn BatchExecutor,
) -> Result<PretrainFinetune, TrainError> {
    config.validate()?;
    let seq_len = net_config.seq_len;
    let stride = config.stride_for(seq_len);
    let data = prepare_dataset(static_recordings, seq_len, stride, config.fractions(), config.seed)?;
    let pretrained = train(config, net_config, &data, exec)?;

    let mut tune_train = Vec::new();
    let mut tune_val = Vec::new();
    let mut holdout = Vec::new();
    for rec in day1 {
        rec.check()?;
        let cut = libm::round(rec.len() as f64 * config.finetune_fraction) as usize;
        let head = rec.slice(0, cut);
        holdout.push(rec.slice(cut, rec.len()));
        let mut windows = data::windows_with(&head, seq_len, stride, &pretrained.features, &pretrained.targets)?;
        let n_val = (windows.len() / 5).max(1).min(windows.len() - 1);
        tune_val.extend(windows.split_off(windows.len() - n_val));
        tune_train.extend(windows);
    }
    if tune_train.is_empty() {
        return Err(TrainError::EmptySplit("fine-tune"));
    }
    let tune_config = TrainConfig {
        learning_rate: config.learning_rate * config.finetune_lr_factor,
        max_epochs: config.finetune_epochs,
        ..config.clone()
    };
    let before = evaluate_loss(&pretrained.params, &tune_val, &config.channels, exec)?;
    let out = fit(&tune_config, pretrained.params.clone(), &tune_train, &tune_val, exec)?;
    let finetuned = Checkpoint {
        params: out.params,
        features: pretrained.features.clone(),
        targets: pretrained.targets,
        train_config: tune_config,
        history: out.history,
    };
    Ok(PretrainFinetune {
        pretrained,
        finetuned,
        day1_holdout: holdout,
        finetune_val_before: before,
        finetune_val_after: out.best_val_loss,
    })
}

/// One row of the multi-task versus single-task comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskComparisonRow {
    pub model: String,
    pub multitask: bool,
    /// RMSE in mmHg for (SBP, DBP, MBP).
    pub rmse: [f64; TARGET_COUNT],
}

/// Trains each depth once on all three targets and once per target with a
/// single-channel loss, under identical budgets and seeds, and reports
/// test-window RMSE. Single-task rows take channel `k` from the model
/// trained on channel `k` alone.
pub fn multitask_vs_singletask(
    depths: &[usize],
    base: NetworkConfig,
    config: &TrainConfig,
    data: &PreparedData,
    exec: &dyn BatchExecutor,
) -> Result<Vec<TaskComparisonRow>, TrainError> {
    let mut single = Vec::new();
    let mut multi = Vec::new();
    for &layers in depths {
        let net = NetworkConfig { num_layers: layers, ..base };
        let name = alloc::format!("DeepRNN-{layers}L");
        let mut rmse = [0.0; TARGET_COUNT];
        for (k, r) in rmse.iter_mut().enumerate() {
            let mut mask = [false; TARGET_COUNT];
            mask[k] = true;
            let cfg = TrainConfig { channels: mask, ..config.clone() };
            *r = train(&cfg, net, data, exec)?.window_rmse(&data.split.test)?[k];
        }
        single.push(TaskComparisonRow { model: name.clone(), multitask: false, rmse });
        let cfg = TrainConfig { channels: ALL_CHANNELS, ..config.clone() };
        let rmse = train(&cfg, net, data, exec)?.window_rmse(&data.split.test)?;
        multi.push(TaskComparisonRow { model: name, multitask: true, rmse });
    }
    single.extend(multi);
    Ok(single)
}
