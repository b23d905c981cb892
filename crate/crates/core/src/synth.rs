//! Seeded synthetic cohorts.
//!
//! Feature cohorts: a latent AR(1) state `s_{t+1} = ρ s_t + √(1−ρ²) η_t`
//! drives BP through a fixed affine map and the seven features through a
//! mildly quadratic mixing plus Gaussian noise. BP therefore depends on the
//! latent history while each feature row is only a noisy view of the
//! current state, so sequence models have an edge over memoryless ones.
//!
//! Waveform cohorts: Gaussian R complexes and two-Gaussian PPG pulses whose
//! per-beat parameters follow the same latent process. Ground-truth
//! landmarks and features come from a dense evaluation of the analytic
//! waveform.
//!
//! Randomness comes from [`SeqRng`] (ChaCha20); one stream per
//! subject/session so records can be regenerated independently.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::features::{FeatureVector, WaveformRecord};
use crate::math::sqrt;
use crate::rng::SeqRng;
use crate::train::Recording;
use crate::{FEATURE_COUNT, TARGET_COUNT};

/// Seed of the fixed mixing maps; shared by every cohort so that cohorts
/// with different seeds come from the same generative model.
const MAP_SEED: u64 = 0x5345_5150_5245_5353;
const ORACLE_STREAM: u64 = 0x6f72_6163_6c65;
/// Points in the large-sample memoryless fit.
pub const ORACLE_SAMPLES: usize = 100_000;
/// Quadratic coefficient of the feature mixing.
const QUADRATIC: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub label: String,
    /// Multiplies `drift_magnitude` to give this session's BP offset.
    pub drift_level: f64,
}

impl SessionSpec {
    pub fn new(label: &str, drift_level: f64) -> Self {
        Self { label: label.into(), drift_level }
    }
}

/// Closed BP interval in mmHg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_subjects: usize,
    pub sessions: Vec<SessionSpec>,
    pub samples_per_session: usize,
    pub latent_dim: usize,
    /// Lag-1 coupling of the latent state, in `[0, 1)`.
    pub rho: f64,
    /// Feature noise standard deviation, in latent units.
    pub sigma_obs: f64,
    /// BP offset (mmHg, SBP channel) per unit of session drift level.
    pub drift_magnitude: f64,
    pub sbp_range: Range,
    pub dbp_range: Range,
    /// Smallest pulse pressure; keeps `SBP > MBP > DBP`.
    pub min_pulse_pressure: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_subjects: 4,
            sessions: vec![
                SessionSpec::new("static", 0.0),
                SessionSpec::new("day1", 1.0),
                SessionSpec::new("day2", 2.0),
                SessionSpec::new("day4", 3.0),
                SessionSpec::new("month6", 5.0),
            ],
            samples_per_session: 600,
            latent_dim: 2,
            rho: 0.9,
            sigma_obs: 2.5,
            drift_magnitude: 3.0,
            sbp_range: Range { min: 60.0, max: 220.0 },
            dbp_range: Range { min: 30.0, max: 140.0 },
            min_pulse_pressure: 10.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(SynthError::InvalidConfig("rho must lie in [0, 1)"));
        }
        if !(self.sigma_obs >= 0.0) {
            return Err(SynthError::InvalidConfig("sigma_obs must be non-negative"));
        }
        if self.latent_dim == 0 {
            return Err(SynthError::InvalidConfig("latent_dim must be positive"));
        }
        if self.sessions.is_empty() || self.num_subjects == 0 {
            return Err(SynthError::InvalidConfig("need at least one subject and one session"));
        }
        if !(self.min_pulse_pressure > 0.0)
            || self.dbp_range.min >= self.dbp_range.max
            || self.dbp_range.max + self.min_pulse_pressure > self.sbp_range.max
            || self.dbp_range.min <= 0.0
        {
            return Err(SynthError::InvalidConfig("BP ranges cannot keep SBP > MBP > DBP > 0"));
        }
        Ok(())
    }
}

/// Fixed directions of the generative model.
#[derive(Debug, Clone)]
struct Maps {
    /// Per feature: direction in latent space.
    feature_dirs: Vec<Vec<f64>>,
    dbp_dir: Vec<f64>,
    pp_dir: Vec<f64>,
}

impl Maps {
    fn new(dim: usize) -> Self {
        if dim == 2 {
            // evenly spread angles keep the 7 × 5 monomial map full rank
            let dirs = (0..FEATURE_COUNT)
                .map(|k| {
                    let a = core::f64::consts::PI * k as f64 / FEATURE_COUNT as f64;
                    vec![libm::cos(a), libm::sin(a)]
                })
                .collect();
            return Self { feature_dirs: dirs, dbp_dir: vec![0.8, 0.6], pp_dir: vec![-0.6, 0.8] };
        }
        let mut rng = SeqRng::new(MAP_SEED, dim as u64);
        let mut unit = || {
            let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            let n = sqrt(v.iter().map(|x| x * x).sum());
            v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
        };
        let feature_dirs = (0..FEATURE_COUNT).map(|_| unit()).collect();
        Self { feature_dirs, dbp_dir: unit(), pp_dir: unit() }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unitless feature signal `g_k = a + 0.2 a² + σ ε`, `a = u_k·s`.
fn feature_signal(maps: &Maps, s: &[f64], sigma: f64, rng: &mut SeqRng) -> [f64; FEATURE_COUNT] {
    core::array::from_fn(|k| {
        let a = dot(&maps.feature_dirs[k], s);
        a + QUADRATIC * a * a + sigma * rng.normal()
    })
}

/// Physical units for the unitless feature signals.
const FEATURE_OFFSET: [f64; FEATURE_COUNT] = [0.25, 72.0, 0.5, 0.32, 0.15, 20.0, 24.0];
const FEATURE_SCALE: [f64; FEATURE_COUNT] = [-0.01, 4.0, 0.04, 0.01, 0.006, 1.5, 1.5];

fn to_physical(g: &[f64; FEATURE_COUNT]) -> [f64; FEATURE_COUNT] {
    core::array::from_fn(|k| FEATURE_OFFSET[k] + FEATURE_SCALE[k] * g[k])
}

fn blood_pressure(cfg: &SynthConfig, maps: &Maps, s: &[f64], drift: f64) -> [f64; TARGET_COUNT] {
    let dbp = (75.0 + 8.0 * dot(&maps.dbp_dir, s) + 0.6 * drift).clamp(cfg.dbp_range.min, cfg.dbp_range.max);
    let pp = (45.0 + 7.0 * dot(&maps.pp_dir, s) + 0.4 * drift).max(cfg.min_pulse_pressure);
    // validation guarantees dbp_max + min_pulse_pressure ≤ sbp_max
    let sbp = (dbp + pp).clamp(cfg.sbp_range.min.max(dbp + cfg.min_pulse_pressure), cfg.sbp_range.max);
    [sbp, dbp, dbp + (sbp - dbp) / 3.0]
}

/// Draws `n` latent states from the stationary AR(1) process.
fn latent_path(cfg: &SynthConfig, n: usize, rng: &mut SeqRng) -> Vec<Vec<f64>> {
    let innov = sqrt(1.0 - cfg.rho * cfg.rho);
    let mut s: Vec<f64> = (0..cfg.latent_dim).map(|_| rng.normal()).collect();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(s.clone());
        for v in s.iter_mut() {
            *v = cfg.rho * *v + innov * rng.normal();
        }
    }
    out
}

/// One generated subject/session with its latent path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSession {
    pub recording: Recording,
    /// Latent state per row.
    pub latent: Vec<Vec<f64>>,
    /// BP offset of this session, mmHg on the SBP channel.
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCohort {
    pub config: SynthConfig,
    /// Subject-major, then sessions in configured order.
    pub sessions: Vec<SyntheticSession>,
    /// RMSE (mmHg) of the best memoryless predictor, per channel.
    pub oracle_rmse: [f64; TARGET_COUNT],
}

impl FeatureCohort {
    pub fn recordings(&self) -> Vec<Recording> {
        self.sessions.iter().map(|s| s.recording.clone()).collect()
    }

    pub fn session(&self, label: &str) -> Vec<Recording> {
        self.sessions.iter().filter(|s| s.recording.session_label == label).map(|s| s.recording.clone()).collect()
    }
}

pub fn subject_name(i: usize) -> String {
    format!("S{:02}", i + 1)
}

/// Generates every subject × session of `cfg`. Identical configs give
/// bitwise identical cohorts.
pub fn generate_feature_cohort(cfg: &SynthConfig) -> Result<FeatureCohort, SynthError> {
    cfg.validate()?;
    let maps = Maps::new(cfg.latent_dim);
    let mut sessions = Vec::new();
    for subj in 0..cfg.num_subjects {
        for (si, spec) in cfg.sessions.iter().enumerate() {
            let mut rng = SeqRng::new(cfg.seed, (subj as u64) << 16 | si as u64);
            let drift = spec.drift_level * cfg.drift_magnitude;
            let latent = latent_path(cfg, cfg.samples_per_session, &mut rng);
            let mut features = Vec::with_capacity(latent.len());
            let mut targets = Vec::with_capacity(latent.len());
            for s in &latent {
                features.push(to_physical(&feature_signal(&maps, s, cfg.sigma_obs, &mut rng)));
                targets.push(blood_pressure(cfg, &maps, s, drift));
            }
            sessions.push(SyntheticSession {
                recording: Recording {
                    subject_id: subject_name(subj),
                    session_label: spec.label.clone(),
                    features,
                    targets,
                },
                latent,
                drift,
            });
        }
    }
    let oracle_rmse = memoryless_oracle(cfg, ORACLE_SAMPLES);
    Ok(FeatureCohort { config: cfg.clone(), sessions, oracle_rmse })
}

/// Degree-2 polynomial terms of the unitless feature signals (linear,
/// squares and cross products; no constant).
fn poly2(g: &[f64; FEATURE_COUNT]) -> Vec<f64> {
    let mut out = Vec::with_capacity(FEATURE_COUNT * (FEATURE_COUNT + 3) / 2);
    out.extend_from_slice(g);
    for i in 0..FEATURE_COUNT {
        for j in i..FEATURE_COUNT {
            out.push(g[i] * g[j]);
        }
    }
    out
}

/// Large-sample estimate of the best memoryless RMSE: a least-squares
/// degree-2 polynomial fit from one feature row to BP over `n` independent
/// stationary draws, evaluated in-sample. The fit is done on the unitless
/// signals; per-feature affine changes do not alter the polynomial space.
pub fn memoryless_oracle(cfg: &SynthConfig, n: usize) -> [f64; TARGET_COUNT] {
    let maps = Maps::new(cfg.latent_dim);
    let mut rng = SeqRng::new(cfg.seed, ORACLE_STREAM);
    let dim = poly2(&[0.0; FEATURE_COUNT]).len() + 1;
    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    let mut xty = DMatrix::<f64>::zeros(dim, TARGET_COUNT);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let s: Vec<f64> = (0..cfg.latent_dim).map(|_| rng.normal()).collect();
        let g = feature_signal(&maps, &s, cfg.sigma_obs, &mut rng);
        let mut x = poly2(&g);
        x.push(1.0);
        let x = DVector::from_vec(x);
        let y = blood_pressure(cfg, &maps, &s, 0.0);
        gram.ger(1.0, &x, &x, 1.0);
        for k in 0..TARGET_COUNT {
            for i in 0..dim {
                xty[(i, k)] += x[i] * y[k];
            }
        }
        rows.push((x, y));
    }
    for i in 0..dim {
        gram[(i, i)] += 1e-9 * n as f64;
    }
    let w = match gram.cholesky() {
        Some(c) => c.solve(&xty),
        None => return [f64::NAN; TARGET_COUNT],
    };
    let mut sse = [0.0; TARGET_COUNT];
    for (x, y) in &rows {
        let p = w.transpose() * x;
        for k in 0..TARGET_COUNT {
            sse[k] += (p[k] - y[k]) * (p[k] - y[k]);
        }
    }
    sse.map(|e| sqrt(e / n as f64))
}

// ---------------------------------------------------------------- waveforms

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveformSynthConfig {
    pub seed: u64,
    pub num_subjects: usize,
    pub session_label: String,
    pub beats_per_record: usize,
    pub sample_rate: f64,
    pub rho: f64,
    /// Mean heart rate, beats per minute.
    pub hr_mean: f64,
    /// Heart-rate change per unit latent.
    pub hr_spread: f64,
    /// Width of the Gaussian R complex, seconds.
    pub ecg_width: f64,
}

impl Default for WaveformSynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_subjects: 3,
            session_label: "day1".into(),
            beats_per_record: 30,
            sample_rate: 1000.0,
            rho: 0.9,
            hr_mean: 70.0,
            hr_spread: 4.0,
            ecg_width: 0.008,
        }
    }
}

/// Parameters of one simulated pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    pub r_time: f64,
    /// Systolic Gaussian centre, seconds after the R peak.
    pub systolic_delay: f64,
    pub systolic_width: f64,
    pub systolic_amplitude: f64,
    /// Reflection centre, seconds after the systolic centre.
    pub reflection_delay: f64,
    pub reflection_width: f64,
    pub reflection_amplitude: f64,
}

/// Landmarks (seconds) and features of one beat from the analytic signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatTruth {
    pub r_peak_t: f64,
    pub r_next_t: f64,
    pub max_slope_t: f64,
    pub tf: f64,
    pub tp: f64,
    pub tn: f64,
    pub reflection_t: f64,
    pub tf_next: f64,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWaveform {
    pub record: WaveformRecord,
    pub pulses: Vec<PulseParams>,
    /// Truth for every beat that has a following beat and a following foot.
    pub truth: Vec<BeatTruth>,
}

fn gaussian(t: f64, mu: f64, w: f64) -> f64 {
    let z = (t - mu) / w;
    libm::exp(-0.5 * z * z)
}

fn ppg_value(pulses: &[PulseParams], t: f64) -> f64 {
    pulses
        .iter()
        .map(|p| {
            let ts = p.r_time + p.systolic_delay;
            p.systolic_amplitude * gaussian(t, ts, p.systolic_width)
                + p.reflection_amplitude * gaussian(t, ts + p.reflection_delay, p.reflection_width)
        })
        .sum()
}

fn ppg_slope(pulses: &[PulseParams], t: f64) -> f64 {
    pulses
        .iter()
        .map(|p| {
            let ts = p.r_time + p.systolic_delay;
            let tr = ts + p.reflection_delay;
            -p.systolic_amplitude * (t - ts) / (p.systolic_width * p.systolic_width) * gaussian(t, ts, p.systolic_width)
                - p.reflection_amplitude * (t - tr) / (p.reflection_width * p.reflection_width)
                    * gaussian(t, tr, p.reflection_width)
        })
        .sum()
}

/// Pulses near `t`; far ones contribute nothing measurable.
fn local(pulses: &[PulseParams], t: f64) -> &[PulseParams] {
    let lo = pulses.partition_point(|p| p.r_time < t - 2.0);
    let hi = pulses.partition_point(|p| p.r_time < t + 2.0);
    &pulses[lo..hi]
}

/// Step of the dense truth grid, seconds.
const TRUTH_DT: f64 = 2e-5;

struct Dense {
    t0: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl Dense {
    fn new(pulses: &[PulseParams], t0: f64, t1: f64) -> Self {
        let n = ((t1 - t0) / TRUTH_DT) as usize + 1;
        let mut values = Vec::with_capacity(n);
        let mut slopes = Vec::with_capacity(n);
        for i in 0..n {
            let t = t0 + i as f64 * TRUTH_DT;
            let near = local(pulses, t);
            values.push(ppg_value(near, t));
            slopes.push(ppg_slope(near, t));
        }
        Self { t0, values, slopes }
    }

    fn t(&self, i: usize) -> f64 {
        self.t0 + i as f64 * TRUTH_DT
    }

    fn idx(&self, t: f64) -> usize {
        (libm::round((t - self.t0) / TRUTH_DT) as usize).min(self.values.len() - 1)
    }
}

fn argmax_by(range: core::ops::Range<usize>, v: &[f64]) -> usize {
    range.clone().fold(range.start, |b, i| if v[i] > v[b] { i } else { b })
}

fn argmin_by(range: core::ops::Range<usize>, v: &[f64]) -> usize {
    range.clone().fold(range.start, |b, i| if v[i] < v[b] { i } else { b })
}

/// First index in `from..to` where the slope turns from positive to
/// non-positive (`down = true`) or from negative to non-negative.
fn turning(d: &Dense, from: usize, to: usize, down: bool) -> Option<usize> {
    (from + 1..to).find(|&i| if down { d.slopes[i - 1] > 0.0 && d.slopes[i] <= 0.0 } else { d.slopes[i - 1] < 0.0 && d.slopes[i] >= 0.0 })
}

fn beat_truth(pulses: &[PulseParams], d: &Dense, n: usize) -> Option<BeatTruth> {
    let r = pulses[n].r_time;
    let r_next = pulses.get(n + 1)?.r_time;
    let r_after = pulses.get(n + 2).map(|p| p.r_time).unwrap_or(r_next + (r_next - r));
    let r_prev = if n > 0 { pulses[n - 1].r_time } else { r - (r_next - r) };

    let slope_in = |a: f64, b: f64| argmax_by(d.idx(a)..d.idx(b), &d.slopes);
    let ms = slope_in(r, r_next);
    let ms_prev = if n > 0 { slope_in(r_prev, r) } else { d.idx(r) };
    let ms_next = slope_in(r_next, r_after);
    let tf = argmin_by(ms_prev..ms + 1, &d.values);
    let tf_next = argmin_by(ms..ms_next + 1, &d.values);
    let tp = turning(&d, tf, tf_next, true)?;
    let tn = turning(&d, tp, tf_next, false)?;
    let refl = turning(&d, tn, tf_next, true)?;

    let base = d.values[tf];
    let area = |a: usize, b: usize| {
        let mut acc = 0.0;
        for i in a..b {
            acc += 0.5 * (d.values[i] + d.values[i + 1]) - base;
        }
        acc * TRUTH_DT
    };
    let a = d.values[tp] - base;
    let b = d.values[refl] - base;
    let features = FeatureVector {
        ptt_s: d.t(ms) - r,
        hr: 60.0 / (r_next - r),
        ri: b / a,
        st: d.t(tn) - d.t(tf),
        up_time: d.t(tp) - d.t(tf),
        sv: area(tf, tn),
        dv: area(tn, tf_next),
    };
    Some(BeatTruth {
        r_peak_t: r,
        r_next_t: r_next,
        max_slope_t: d.t(ms),
        tf: d.t(tf),
        tp: d.t(tp),
        tn: d.t(tn),
        reflection_t: d.t(refl),
        tf_next: d.t(tf_next),
        features,
    })
}

/// Generates one record per subject with R peaks, PPG pulses and truth.
pub fn generate_waveform_cohort(cfg: &WaveformSynthConfig) -> Result<Vec<SyntheticWaveform>, SynthError> {
    if !(cfg.sample_rate > 0.0) || cfg.beats_per_record < 3 || !(0.0..1.0).contains(&cfg.rho) {
        return Err(SynthError::InvalidConfig("need a positive rate, ≥3 beats and rho in [0, 1)"));
    }
    if !(cfg.hr_mean > 30.0 && cfg.hr_mean < 110.0) {
        return Err(SynthError::InvalidConfig("hr_mean must lie in (30, 110) bpm"));
    }
    let latent_cfg = SynthConfig { rho: cfg.rho, ..SynthConfig::default() };
    (0..cfg.num_subjects)
        .map(|subj| {
            let mut rng = SeqRng::new(cfg.seed, 0x7761_7665 << 16 | subj as u64);
            let latent = latent_path(&latent_cfg, cfg.beats_per_record, &mut rng);
            let mut t = 0.5;
            let mut pulses = Vec::with_capacity(latent.len());
            for s in &latent {
                let (a, b) = (s[0].clamp(-2.5, 2.5), s[1].clamp(-2.5, 2.5));
                pulses.push(PulseParams {
                    r_time: t,
                    systolic_delay: 0.22 - 0.015 * a,
                    systolic_width: 0.065,
                    systolic_amplitude: 1.0 + 0.05 * b,
                    reflection_delay: 0.27 + 0.015 * b,
                    reflection_width: 0.075,
                    reflection_amplitude: 0.5 + 0.06 * b,
                });
                t += 60.0 / (cfg.hr_mean + cfg.hr_spread * a);
            }
            let duration = t + 0.5;
            let len = (duration * cfg.sample_rate) as usize;
            let mut ecg = vec![0.0; len];
            let mut ppg = vec![0.0; len];
            for (i, (e, p)) in ecg.iter_mut().zip(ppg.iter_mut()).enumerate() {
                let ti = i as f64 / cfg.sample_rate;
                let near = local(&pulses, ti);
                *e = near.iter().map(|q| gaussian(ti, q.r_time, cfg.ecg_width)).sum();
                *p = ppg_value(near, ti);
            }
            let dense = Dense::new(&pulses, 0.0, duration);
            let truth = (0..pulses.len()).filter_map(|n| beat_truth(&pulses, &dense, n)).collect();
            Ok(SyntheticWaveform {
                record: WaveformRecord {
                    ecg,
                    ppg,
                    sample_rate: cfg.sample_rate,
                    subject_id: subject_name(subj),
                    session_label: cfg.session_label.clone(),
                },
                pulses,
                truth,
            })
        })
        .collect()
}
