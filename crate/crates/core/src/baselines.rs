//! Reference predictors: two calibration-based PTT models, a linear
//! Kalman filter over the BP state, and ridge regression.
//!
//! The PTT forms used here are this crate's own definitions:
//!
//! * Chen: `SBP_t = SBP_cal + K·(PTT_cal − PTT_t)/PTT_cal`, SBP only.
//! * Poon: `SBP_t = a_s + b_s/PTT_t²` and `DBP_t = a_d + b_d/PTT_t²`.
//!
//! Both are calibrated per subject on a leading window of beats and fit by
//! least squares.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::train::{ChannelMask, Recording};
use crate::{FEATURE_COUNT, TARGET_COUNT};

type Mat7x3 = SMatrix<f64, FEATURE_COUNT, TARGET_COUNT>;
type Mat3x7 = SMatrix<f64, TARGET_COUNT, FEATURE_COUNT>;
type Mat7 = SMatrix<f64, FEATURE_COUNT, FEATURE_COUNT>;
type Vec7 = SVector<f64, FEATURE_COUNT>;

/// Added to the diagonal before any covariance inversion.
pub const COVARIANCE_JITTER: f64 = 1e-8;
pub const MIN_CALIBRATION_BEATS: usize = 10;
pub const DEFAULT_CALIBRATION_BEATS: usize = 60;
pub const DEFAULT_RIDGE_ALPHA: f64 = 1.0;
/// Rows needed by [`linreg_fit`]: one more than the feature count.
pub const MIN_RIDGE_ROWS: usize = FEATURE_COUNT + 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BaselineError {
    #[error("calibration for subject {subject:?} is unusable: {reason}")]
    InsufficientCalibration { subject: String, reason: &'static str },
    #[error("covariance is singular even after regularization")]
    SingularCovariance,
    #[error("no calibration stored for subject {0:?}")]
    UnknownSubject(String),
    #[error("need at least {needed} rows, got {got}")]
    NotEnoughRows { needed: usize, got: usize },
    #[error("invalid baseline configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("input lengths differ")]
    ShapeMismatch,
}

/// Per-row predictions; `None` marks a beat the model rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub rows: Vec<Option<[f64; TARGET_COUNT]>>,
    /// Channels the model actually predicts.
    pub channels: ChannelMask,
}

const SBP_ONLY: ChannelMask = [true, false, false];
const SBP_DBP: ChannelMask = [true, true, false];

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------- Chen

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChenCalibration {
    pub sbp_cal: f64,
    pub ptt_cal: f64,
    pub k: f64,
}

/// Fits one calibration from paired PTT (s) and SBP (mmHg) beats. Beats with
/// `PTT ≤ 0` or non-finite values are ignored; `PTT_cal` and `SBP_cal` are
/// the window means and `K` the least-squares slope.
pub fn ptt_chen_fit(ptt: &[f64], sbp: &[f64]) -> Result<ChenCalibration, BaselineError> {
    if ptt.len() != sbp.len() {
        return Err(BaselineError::ShapeMismatch);
    }
    let (p, s): (Vec<f64>, Vec<f64>) =
        ptt.iter().zip(sbp).filter(|(p, s)| **p > 0.0 && p.is_finite() && s.is_finite()).map(|(p, s)| (*p, *s)).unzip();
    if p.len() < MIN_CALIBRATION_BEATS {
        return Err(insufficient("fewer than 10 valid beats"));
    }
    let ptt_cal = mean(&p);
    let sbp_cal = mean(&s);
    let mut num = 0.0;
    let mut den = 0.0;
    for (pi, si) in p.iter().zip(&s) {
        let u = (ptt_cal - pi) / ptt_cal;
        num += u * (si - sbp_cal);
        den += u * u;
    }
    if den <= f64::EPSILON * p.len() as f64 * 1e-6 {
        return Err(insufficient("calibration PTT has no variance"));
    }
    Ok(ChenCalibration { sbp_cal, ptt_cal, k: num / den })
}

fn insufficient(reason: &'static str) -> BaselineError {
    BaselineError::InsufficientCalibration { subject: String::new(), reason }
}

pub fn ptt_chen_predict(cal: &ChenCalibration, ptt: &[f64]) -> Vec<Option<f64>> {
    ptt.iter()
        .map(|&p| (p > 0.0 && p.is_finite()).then(|| cal.sbp_cal + cal.k * (cal.ptt_cal - p) / cal.ptt_cal))
        .collect()
}

// ---------------------------------------------------------------- Poon

/// `(a, b)` of `BP = a + b/PTT²` for SBP and DBP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoonCalibration {
    pub sbp: (f64, f64),
    pub dbp: (f64, f64),
}

/// Least-squares fit of SBP and DBP on `1/PTT²`. Rejected beats
/// (`PTT ≤ 0`) are returned by index. Constant PTT gives an intercept-only
/// model at the calibration means.
pub fn ptt_poon_fit(ptt: &[f64], sbp: &[f64], dbp: &[f64]) -> Result<(PoonCalibration, Vec<usize>), BaselineError> {
    if ptt.len() != sbp.len() || ptt.len() != dbp.len() {
        return Err(BaselineError::ShapeMismatch);
    }
    let mut rejected = Vec::new();
    let mut u = Vec::new();
    let mut s = Vec::new();
    let mut d = Vec::new();
    for (i, &p) in ptt.iter().enumerate() {
        if p > 0.0 && p.is_finite() {
            u.push(1.0 / (p * p));
            s.push(sbp[i]);
            d.push(dbp[i]);
        } else {
            rejected.push(i);
        }
    }
    if u.len() < MIN_CALIBRATION_BEATS {
        return Err(insufficient("fewer than 10 valid beats"));
    }
    let um = mean(&u);
    let var: f64 = u.iter().map(|x| (x - um) * (x - um)).sum();
    let fit = |y: &[f64]| {
        let ym = mean(y);
        if var <= um * um * 1e-24 * u.len() as f64 {
            return (ym, 0.0);
        }
        let cov: f64 = u.iter().zip(y).map(|(x, y)| (x - um) * (y - ym)).sum();
        let b = cov / var;
        (ym - b * um, b)
    };
    Ok((PoonCalibration { sbp: fit(&s), dbp: fit(&d) }, rejected))
}

pub fn ptt_poon_predict(cal: &PoonCalibration, ptt: &[f64]) -> Vec<Option<(f64, f64)>> {
    ptt.iter()
        .map(|&p| {
            (p > 0.0 && p.is_finite()).then(|| {
                let u = 1.0 / (p * p);
                (cal.sbp.0 + cal.sbp.1 * u, cal.dbp.0 + cal.dbp.1 * u)
            })
        })
        .collect()
}

/// Calibrations keyed by subject, each fit on the first `beats` rows of the
/// subject's first recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PttModels<C> {
    pub calibration_beats: usize,
    pub per_subject: BTreeMap<String, C>,
    /// Beats rejected during calibration, by subject.
    pub rejected: BTreeMap<String, Vec<usize>>,
}

pub type PttChen = PttModels<ChenCalibration>;
pub type PttPoon = PttModels<PoonCalibration>;

fn first_recordings(recordings: &[Recording]) -> BTreeMap<&str, &Recording> {
    let mut out = BTreeMap::new();
    for r in recordings {
        out.entry(r.subject_id.as_str()).or_insert(r);
    }
    out
}

fn with_subject(e: BaselineError, subject: &str) -> BaselineError {
    match e {
        BaselineError::InsufficientCalibration { reason, .. } => {
            BaselineError::InsufficientCalibration { subject: subject.into(), reason }
        }
        e => e,
    }
}

impl PttChen {
    pub fn fit(recordings: &[Recording], beats: usize) -> Result<Self, BaselineError> {
        let mut per_subject = BTreeMap::new();
        for (s, r) in first_recordings(recordings) {
            r.check().map_err(|_| BaselineError::ShapeMismatch)?;
            let n = beats.min(r.len());
            let ptt: Vec<f64> = r.features[..n].iter().map(|f| f[0]).collect();
            let sbp: Vec<f64> = r.targets[..n].iter().map(|t| t[0]).collect();
            per_subject.insert(s.into(), ptt_chen_fit(&ptt, &sbp).map_err(|e| with_subject(e, s))?);
        }
        Ok(Self { calibration_beats: beats, per_subject, rejected: BTreeMap::new() })
    }

    pub fn predict(&self, rec: &Recording) -> Result<Prediction, BaselineError> {
        let cal = self.per_subject.get(&rec.subject_id).ok_or_else(|| BaselineError::UnknownSubject(rec.subject_id.clone()))?;
        let ptt: Vec<f64> = rec.features.iter().map(|f| f[0]).collect();
        let rows = ptt_chen_predict(cal, &ptt).into_iter().map(|s| s.map(|s| [s, f64::NAN, f64::NAN])).collect();
        Ok(Prediction { rows, channels: SBP_ONLY })
    }
}

impl PttPoon {
    pub fn fit(recordings: &[Recording], beats: usize) -> Result<Self, BaselineError> {
        let mut per_subject = BTreeMap::new();
        let mut rejected = BTreeMap::new();
        for (s, r) in first_recordings(recordings) {
            r.check().map_err(|_| BaselineError::ShapeMismatch)?;
            let n = beats.min(r.len());
            let col = |k: usize| -> Vec<f64> { r.targets[..n].iter().map(|t| t[k]).collect() };
            let ptt: Vec<f64> = r.features[..n].iter().map(|f| f[0]).collect();
            let (cal, rej) = ptt_poon_fit(&ptt, &col(0), &col(1)).map_err(|e| with_subject(e, s))?;
            per_subject.insert(String::from(s), cal);
            if !rej.is_empty() {
                rejected.insert(String::from(s), rej);
            }
        }
        Ok(Self { calibration_beats: beats, per_subject, rejected })
    }

    pub fn predict(&self, rec: &Recording) -> Result<Prediction, BaselineError> {
        let cal = self.per_subject.get(&rec.subject_id).ok_or_else(|| BaselineError::UnknownSubject(rec.subject_id.clone()))?;
        let ptt: Vec<f64> = rec.features.iter().map(|f| f[0]).collect();
        let rows = ptt_poon_predict(cal, &ptt).into_iter().map(|p| p.map(|(s, d)| [s, d, f64::NAN])).collect();
        Ok(Prediction { rows, channels: SBP_DBP })
    }
}

// ---------------------------------------------------------------- Kalman

/// Linear-Gaussian model with the BP vector as state and the feature vector
/// as observation, both centered on their training means.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanModel {
    pub a: Matrix3<f64>,
    /// Maps state to expected features.
    pub c: Mat7x3,
    pub q: Matrix3<f64>,
    pub r: Mat7,
    pub state_mean: Vector3<f64>,
    pub feature_mean: Vec7,
    pub initial_state: Vector3<f64>,
    pub initial_cov: Matrix3<f64>,
}

/// Posterior means (uncentered, mmHg) and covariances per step.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanRun {
    pub means: Vec<[f64; TARGET_COUNT]>,
    pub covariances: Vec<Matrix3<f64>>,
}

fn regularized_inverse<const N: usize>(m: &SMatrix<f64, N, N>) -> Result<SMatrix<f64, N, N>, BaselineError> {
    let reg = m + SMatrix::<f64, N, N>::identity() * COVARIANCE_JITTER;
    reg.try_inverse().filter(|inv| inv.iter().all(|v| v.is_finite())).ok_or(BaselineError::SingularCovariance)
}

/// Least-squares estimate of every model matrix from training recordings.
/// Transition pairs never cross recording boundaries.
pub fn kalman_fit(recordings: &[Recording]) -> Result<KalmanModel, BaselineError> {
    let rows: usize = recordings.iter().map(|r| r.len()).sum();
    if rows < 2 {
        return Err(BaselineError::NotEnoughRows { needed: 2, got: rows });
    }
    for r in recordings {
        r.check().map_err(|_| BaselineError::ShapeMismatch)?;
    }
    let mut mx = Vector3::zeros();
    let mut my = Vec7::zeros();
    for r in recordings {
        for (f, t) in r.features.iter().zip(&r.targets) {
            mx += Vector3::from_row_slice(t);
            my += Vec7::from_row_slice(f);
        }
    }
    mx /= rows as f64;
    my /= rows as f64;
    let centered = |r: &Recording, i: usize| {
        (Vector3::from_row_slice(&r.targets[i]) - mx, Vec7::from_row_slice(&r.features[i]) - my)
    };

    let mut sxx = Matrix3::zeros();
    let mut syx = Mat7x3::zeros();
    let mut pxx = Matrix3::zeros();
    let mut pnx = Matrix3::zeros();
    let mut pairs = 0usize;
    for r in recordings {
        for i in 0..r.len() {
            let (x, y) = centered(r, i);
            sxx += x * x.transpose();
            syx += y * x.transpose();
            if i + 1 < r.len() {
                let (xn, _) = centered(r, i + 1);
                pxx += x * x.transpose();
                pnx += xn * x.transpose();
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        return Err(BaselineError::NotEnoughRows { needed: 2, got: 1 });
    }
    let a = pnx * regularized_inverse(&pxx)?;
    let c = syx * regularized_inverse(&sxx)?;

    let mut q = Matrix3::zeros();
    let mut rr = Mat7::zeros();
    for r in recordings {
        for i in 0..r.len() {
            let (x, y) = centered(r, i);
            let e = y - c * x;
            rr += e * e.transpose();
            if i + 1 < r.len() {
                let (xn, _) = centered(r, i + 1);
                let w = xn - a * x;
                q += w * w.transpose();
            }
        }
    }
    q /= pairs as f64;
    rr /= rows as f64;
    // linearly dependent targets (MBP from SBP and DBP) leave these singular
    let jitter = Matrix3::identity() * COVARIANCE_JITTER;
    Ok(KalmanModel {
        a,
        c,
        q: symmetrize3(&q) + jitter,
        r: (rr + rr.transpose()) * 0.5,
        state_mean: mx,
        feature_mean: my,
        initial_state: Vector3::zeros(),
        initial_cov: symmetrize3(&(sxx / rows as f64)) + jitter,
    })
}

fn symmetrize3(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

/// Runs the filter with features as observations. The first observation
/// updates the initial state directly; later ones follow a predict step.
/// Covariance updates use the Joseph form.
pub fn kalman_filter(model: &KalmanModel, features: &[[f64; FEATURE_COUNT]]) -> Result<KalmanRun, BaselineError> {
    let mut x = model.initial_state;
    let mut p = model.initial_cov;
    let eye = Matrix3::identity();
    let mut run = KalmanRun { means: Vec::with_capacity(features.len()), covariances: Vec::with_capacity(features.len()) };
    for (t, f) in features.iter().enumerate() {
        if t > 0 {
            x = model.a * x;
            p = symmetrize3(&(model.a * p * model.a.transpose() + model.q));
        }
        let y = Vec7::from_row_slice(f) - model.feature_mean;
        let s = model.c * p * model.c.transpose() + model.r;
        let s_inv = regularized_inverse(&((s + s.transpose()) * 0.5))?;
        let k: Mat3x7 = p * model.c.transpose() * s_inv;
        x += k * (y - model.c * x);
        let ikc = eye - k * model.c;
        p = symmetrize3(&(ikc * p * ikc.transpose() + k * model.r * k.transpose()));
        let m = x + model.state_mean;
        run.means.push([m[0], m[1], m[2]]);
        run.covariances.push(p);
    }
    Ok(run)
}

pub fn kalman_predict(model: &KalmanModel, features: &[[f64; FEATURE_COUNT]]) -> Result<Prediction, BaselineError> {
    let run = kalman_filter(model, features)?;
    Ok(Prediction { rows: run.means.into_iter().map(Some).collect(), channels: [true; TARGET_COUNT] })
}

/// Largest `|P − Pᵀ|` entry and smallest eigenvalue of a covariance.
pub fn covariance_health(p: &Matrix3<f64>) -> (f64, f64) {
    let asym = (p - p.transpose()).abs().max();
    let eig = SymmetricEigen::new(symmetrize3(p));
    (asym, eig.eigenvalues.min())
}

// ---------------------------------------------------------------- ridge

/// Per-timestep linear map from features to BP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// Row `k` holds the weights of channel `k`.
    pub weights: [[f64; FEATURE_COUNT]; TARGET_COUNT],
    pub intercept: [f64; TARGET_COUNT],
    pub alpha: f64,
}

/// Ridge solution `(XᵀX + αI)⁻¹Xᵀy`. With `intercept`, `X` and `y` are
/// centered first so the intercept is not penalized. Returns the weights
/// (`d × m`) and intercept (`m`).
pub fn ridge_solve(x: &DMatrix<f64>, y: &DMatrix<f64>, alpha: f64, intercept: bool) -> Result<(DMatrix<f64>, DVector<f64>), BaselineError> {
    if !(alpha > 0.0) {
        return Err(BaselineError::InvalidConfig("ridge alpha must be positive"));
    }
    if x.nrows() != y.nrows() || x.nrows() == 0 {
        return Err(BaselineError::ShapeMismatch);
    }
    let (xm, ym) = if intercept {
        (x.row_mean().transpose(), y.row_mean().transpose())
    } else {
        (DVector::zeros(x.ncols()), DVector::zeros(y.ncols()))
    };
    let mut xc = x.clone();
    let mut yc = y.clone();
    if intercept {
        for mut row in xc.row_iter_mut() {
            row -= xm.transpose();
        }
        for mut row in yc.row_iter_mut() {
            row -= ym.transpose();
        }
    }
    let gram = xc.transpose() * &xc + DMatrix::identity(x.ncols(), x.ncols()) * alpha;
    let rhs = xc.transpose() * &yc;
    let w = gram.cholesky().ok_or(BaselineError::SingularCovariance)?.solve(&rhs);
    let b = &ym - w.transpose() * &xm;
    Ok((w, b))
}

/// Fits ridge regression with an intercept on every row of the recordings.
pub fn linreg_fit(recordings: &[Recording], alpha: f64) -> Result<LinearModel, BaselineError> {
    let rows: Vec<(&[f64; FEATURE_COUNT], &[f64; TARGET_COUNT])> =
        recordings.iter().flat_map(|r| r.features.iter().zip(&r.targets)).collect();
    if rows.len() < MIN_RIDGE_ROWS {
        return Err(BaselineError::NotEnoughRows { needed: MIN_RIDGE_ROWS, got: rows.len() });
    }
    let x = DMatrix::from_fn(rows.len(), FEATURE_COUNT, |i, j| rows[i].0[j]);
    let y = DMatrix::from_fn(rows.len(), TARGET_COUNT, |i, k| rows[i].1[k]);
    let (w, b) = ridge_solve(&x, &y, alpha, true)?;
    Ok(LinearModel {
        weights: core::array::from_fn(|k| core::array::from_fn(|j| w[(j, k)])),
        intercept: core::array::from_fn(|k| b[k]),
        alpha,
    })
}

impl LinearModel {
    pub fn predict_row(&self, f: &[f64; FEATURE_COUNT]) -> [f64; TARGET_COUNT] {
        core::array::from_fn(|k| self.intercept[k] + self.weights[k].iter().zip(f).map(|(w, x)| w * x).sum::<f64>())
    }
}

pub fn linreg_predict(model: &LinearModel, features: &[[f64; FEATURE_COUNT]]) -> Prediction {
    Prediction { rows: features.iter().map(|f| Some(model.predict_row(f))).collect(), channels: [true; TARGET_COUNT] }
}
