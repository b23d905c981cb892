//! Metrics and evaluation protocols. Everything here works in mmHg.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::baselines::{kalman_predict, linreg_predict, BaselineError, KalmanModel, LinearModel, Prediction, PttChen, PttPoon};
use crate::math::sqrt;
use crate::rnn::NetworkConfig;
use crate::train::{train, BatchExecutor, Checkpoint, PreparedData, Recording, TrainConfig, TrainError};
use crate::TARGET_COUNT;

pub const CHANNEL_NAMES: [&str; TARGET_COUNT] = ["SBP", "DBP", "MBP"];
/// Half-width of the agreement interval in standard deviations.
pub const AGREEMENT_Z: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("prediction has {pred} values but truth has {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("not enough values to evaluate")]
    EmptyInput,
    #[error("session {0:?} has no recordings")]
    MissingSession(String),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// `√(mean((pred − truth)²))`.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    if pred.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sqrt(sse / pred.len() as f64))
}

/// Per-channel RMSE over rows the model did not reject; `None` for channels
/// the model does not predict.
pub fn prediction_rmse(pred: &Prediction, truth: &[[f64; TARGET_COUNT]]) -> Result<[Option<f64>; TARGET_COUNT], EvalError> {
    let pairs = paired(pred, truth)?;
    let mut out = [None; TARGET_COUNT];
    for (k, o) in out.iter_mut().enumerate() {
        if pred.channels[k] {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.iter().map(|(p, t)| (p[k], t[k])).unzip();
            *o = Some(rmse(&p, &t)?);
        }
    }
    Ok(out)
}

fn paired<'a>(pred: &'a Prediction, truth: &'a [[f64; TARGET_COUNT]]) -> Result<Vec<(&'a [f64; 3], &'a [f64; 3])>, EvalError> {
    if pred.rows.len() != truth.len() {
        return Err(EvalError::LengthMismatch { pred: pred.rows.len(), truth: truth.len() });
    }
    Ok(pred.rows.iter().zip(truth).filter_map(|(p, t)| p.as_ref().map(|p| (p, t))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub mean_diff: f64,
    /// Population standard deviation of the differences.
    pub sd_diff: f64,
    pub lower: f64,
    pub upper: f64,
    /// Share of differences inside the limits.
    pub fraction_within: f64,
    /// `((pred + truth)/2, pred − truth)` per pair.
    pub points: Vec<(f64, f64)>,
}

pub fn bland_altman(pred: &[f64], truth: &[f64]) -> Result<BlandAltman, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    if pred.len() < 2 {
        return Err(EvalError::EmptyInput);
    }
    let n = pred.len() as f64;
    let points: Vec<(f64, f64)> = pred.iter().zip(truth).map(|(p, t)| (0.5 * (p + t), p - t)).collect();
    let mean_diff = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sd_diff = sqrt(points.iter().map(|p| (p.1 - mean_diff) * (p.1 - mean_diff)).sum::<f64>() / n);
    let half = AGREEMENT_Z * sd_diff;
    let within = points.iter().filter(|p| (p.1 - mean_diff).abs() <= half).count();
    Ok(BlandAltman {
        mean_diff,
        sd_diff,
        lower: mean_diff - half,
        upper: mean_diff + half,
        fraction_within: within as f64 / n,
        points,
    })
}

/// Anything that maps a recording's features to BP in mmHg.
pub trait Predictor {
    fn predict(&self, rec: &Recording) -> Result<Prediction, EvalError>;
}

impl Predictor for Checkpoint {
    fn predict(&self, rec: &Recording) -> Result<Prediction, EvalError> {
        let rows = Checkpoint::predict(self, rec)?.into_iter().map(Some).collect();
        Ok(Prediction { rows, channels: [true; TARGET_COUNT] })
    }
}

impl Predictor for PttChen {
    fn predict(&self, rec: &Recording) -> Result<Prediction, EvalError> {
        Ok(PttChen::predict(self, rec)?)
    }
}

impl Predictor for PttPoon {
    fn predict(&self, rec: &Recording) -> Result<Prediction, EvalError> {
        Ok(PttPoon::predict(self, rec)?)
    }
}

impl Predictor for KalmanModel {
    fn predict(&self, rec: &Recording) -> Result<Prediction, EvalError> {
        Ok(kalman_predict(self, &rec.features)?)
    }
}

impl Predictor for LinearModel {
    fn predict(&self, rec: &Recording) -> Result<Prediction, EvalError> {
        Ok(linreg_predict(self, &rec.features))
    }
}

/// RMSE of one model on one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRmse {
    pub session: String,
    /// Over all rows of the session pooled together.
    pub pooled: [Option<f64>; TARGET_COUNT],
    /// Mean of the per-subject RMSEs.
    pub macro_avg: [Option<f64>; TARGET_COUNT],
    pub subjects: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub dataset: String,
    /// Pooled over every session.
    pub rmse: [Option<f64>; TARGET_COUNT],
    pub sessions: Vec<SessionRmse>,
    /// SBP and DBP agreement over every session.
    pub bland_altman: [Option<BlandAltman>; 2],
}

/// A named group of recordings evaluated together.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionData {
    pub label: String,
    pub recordings: Vec<Recording>,
}

impl SessionData {
    /// Groups recordings by session label, keeping first-seen order.
    pub fn group(recordings: &[Recording]) -> Vec<SessionData> {
        let mut out: Vec<SessionData> = Vec::new();
        for r in recordings {
            match out.iter_mut().find(|s| s.label == r.session_label) {
                Some(s) => s.recordings.push(r.clone()),
                None => out.push(SessionData { label: r.session_label.clone(), recordings: alloc::vec![r.clone()] }),
            }
        }
        out
    }
}

/// Runs `model` on every session and reports pooled and macro-averaged
/// RMSE per session, plus overall RMSE and Bland-Altman statistics.
pub fn multiday_eval(
    model_name: &str,
    model: &dyn Predictor,
    dataset: &str,
    sessions: &[SessionData],
) -> Result<EvalReport, EvalError> {
    if sessions.is_empty() {
        return Err(EvalError::MissingSession(String::new()));
    }
    let mut all_pred: Vec<Option<[f64; TARGET_COUNT]>> = Vec::new();
    let mut all_truth: Vec<[f64; TARGET_COUNT]> = Vec::new();
    let mut channels = [true; TARGET_COUNT];
    let mut rows = Vec::new();
    for s in sessions {
        if s.recordings.is_empty() {
            return Err(EvalError::MissingSession(s.label.clone()));
        }
        let mut pooled_p = Vec::new();
        let mut pooled_t = Vec::new();
        let mut per_subject: Vec<[Option<f64>; TARGET_COUNT]> = Vec::new();
        for rec in &s.recordings {
            let p = model.predict(rec)?;
            channels = p.channels;
            per_subject.push(prediction_rmse(&p, &rec.targets)?);
            pooled_p.extend(p.rows);
            pooled_t.extend_from_slice(&rec.targets);
        }
        let pooled = prediction_rmse(&Prediction { rows: pooled_p.clone(), channels }, &pooled_t)?;
        let macro_avg = core::array::from_fn(|k| {
            channels[k].then(|| per_subject.iter().filter_map(|r| r[k]).sum::<f64>() / per_subject.len() as f64)
        });
        rows.push(SessionRmse { session: s.label.clone(), pooled, macro_avg, subjects: s.recordings.len() });
        all_pred.extend(pooled_p);
        all_truth.extend(pooled_t);
    }
    let overall = Prediction { rows: all_pred, channels };
    let rmse = prediction_rmse(&overall, &all_truth)?;
    let pairs = paired(&overall, &all_truth)?;
    let ba = |k: usize| -> Option<BlandAltman> {
        if !channels[k] {
            return None;
        }
        let (p, t): (Vec<f64>, Vec<f64>) = pairs.iter().map(|(p, t)| (p[k], t[k])).unzip();
        bland_altman(&p, &t).ok()
    };
    Ok(EvalReport {
        model: model_name.into(),
        dataset: dataset.into(),
        rmse,
        bland_altman: [ba(0), ba(1)],
        sessions: rows,
    })
}

/// Rows × columns of optional numbers, rendered with `-` for gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
    pub footer: Vec<String>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (name, vals) in &self.rows {
            out.push_str(name);
            for v in vals {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&format!("{v:.4}"));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n{:<24}", self.title, "");
        for c in &self.columns {
            out.push_str(&format!("{c:>12}"));
        }
        out.push('\n');
        for (name, vals) in &self.rows {
            out.push_str(&format!("{name:<24}"));
            for v in vals {
                match v {
                    Some(v) => out.push_str(&format!("{v:>12.2}")),
                    None => out.push_str(&format!("{:>12}", "-")),
                }
            }
            out.push('\n');
        }
        for f in &self.footer {
            out.push_str(f);
            out.push('\n');
        }
        out
    }
}

/// Model order of the overall comparison table.
pub const COMPARISON_MODELS: [&str; 9] =
    ["PTT-Chen", "PTT-Poon", "BLR", "Kalman", "LSTM", "BiLSTM", "DeepRNN-2L", "DeepRNN-3L", "DeepRNN-4L"];

/// SBP/DBP RMSE reported for the original clinical cohort, in
/// [`COMPARISON_MODELS`] order. For context only; not comparable with
/// synthetic results.
pub const CLINICAL_REFERENCE: [(Option<f64>, Option<f64>); 9] = [
    (Some(5.31), None),
    (Some(5.75), Some(3.50)),
    (Some(7.45), Some(6.20)),
    (Some(5.17), Some(3.09)),
    (Some(6.31), Some(4.58)),
    (Some(5.25), Some(3.04)),
    (Some(5.13), Some(3.73)),
    (Some(4.92), Some(3.13)),
    (Some(3.73), Some(2.43)),
];

/// Overall comparison: one row per model, SBP and DBP RMSE columns.
/// `results` pairs model names with their reports; rows follow
/// [`COMPARISON_MODELS`] order, unknown names are appended.
pub fn comparison_table(results: &[(&str, [Option<f64>; TARGET_COUNT])]) -> Table {
    let mut ordered: Vec<&(&str, [Option<f64>; TARGET_COUNT])> = Vec::new();
    for name in COMPARISON_MODELS {
        ordered.extend(results.iter().filter(|r| r.0 == name));
    }
    ordered.extend(results.iter().filter(|r| !COMPARISON_MODELS.contains(&r.0)));
    let mut footer = alloc::vec![String::from("Reference RMSE (SBP/DBP, mmHg) reported for the original clinical cohort:")];
    for (name, (s, d)) in COMPARISON_MODELS.iter().zip(CLINICAL_REFERENCE) {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
        footer.push(format!("  {name}: {} / {}", f(s), f(d)));
    }
    Table {
        title: "RMSE (mmHg)".into(),
        columns: alloc::vec!["RMSE(SBP)".into(), "RMSE(DBP)".into()],
        rows: ordered.into_iter().map(|(n, r)| (String::from(*n), alloc::vec![r[0], r[1]])).collect(),
        footer,
    }
}

/// Models × sessions table of pooled RMSE for one channel.
pub fn session_table(reports: &[EvalReport], channel: usize) -> Table {
    let mut columns: Vec<String> = Vec::new();
    for r in reports {
        for s in &r.sessions {
            if !columns.contains(&s.session) {
                columns.push(s.session.clone());
            }
        }
    }
    let rows = reports
        .iter()
        .map(|r| {
            let vals = columns
                .iter()
                .map(|c| r.sessions.iter().find(|s| &s.session == c).and_then(|s| s.pooled[channel]))
                .collect();
            (r.model.clone(), vals)
        })
        .collect();
    Table { title: format!("{} RMSE per session (mmHg)", CHANNEL_NAMES[channel]), columns, rows, footer: Vec::new() }
}

/// Paired residual / plain-stack comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub table: Table,
    pub with_residual: Checkpoint,
    pub without_residual: Checkpoint,
}

impl AblationReport {
    /// Mean pre-clip gradient norm per epoch, (with, without).
    pub fn grad_norm_history(&self) -> (Vec<f64>, Vec<f64>) {
        let h = |c: &Checkpoint| c.history.iter().map(|e| e.grad_norm_mean).collect();
        (h(&self.with_residual), h(&self.without_residual))
    }
}

/// Trains `net` with and without residual additions under the same seed and
/// budget and reports test-window RMSE.
pub fn ablation_residual(
    net: NetworkConfig,
    config: &TrainConfig,
    data: &PreparedData,
    exec: &dyn BatchExecutor,
) -> Result<AblationReport, EvalError> {
    let with = train(config, NetworkConfig { residual: true, ..net }, data, exec)?;
    let without = train(config, NetworkConfig { residual: false, ..net }, data, exec)?;
    let a = with.window_rmse(&data.split.test)?;
    let b = without.window_rmse(&data.split.test)?;
    let table = Table {
        title: format!("Residual ablation, DeepRNN-{}L (RMSE, mmHg)", net.num_layers),
        columns: alloc::vec!["RMSE(SBP)".into(), "RMSE(DBP)".into()],
        rows: alloc::vec![
            ("with residual connections".into(), alloc::vec![Some(a[0]), Some(a[1])]),
            ("without residual connections".into(), alloc::vec![Some(b[0]), Some(b[1])]),
        ],
        footer: Vec::new(),
    };
    Ok(AblationReport { table, with_residual: with, without_residual: without })
}
