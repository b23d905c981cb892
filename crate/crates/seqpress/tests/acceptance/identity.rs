//! Every closed-form and hand-computed example of the component contracts.

use std::path::Path;
use std::process::Command;

use nalgebra::{DMatrix, Matrix3, SMatrix, SVector, Vector3};
use seqpress_core::baselines::{
    kalman_filter, linreg_fit, ptt_chen_fit, ptt_chen_predict, ptt_poon_fit, ptt_poon_predict, ridge_solve,
    BaselineError, ChenCalibration, KalmanModel,
};
use seqpress_core::bptt::{
    check_coordinates, deeprnn_backward, finite_difference_check, residual_gradient_decomposition_check,
    sample_coordinates, sample_gradient,
};
use seqpress_core::eval::{
    ablation_residual, bland_altman, comparison_table, multiday_eval, rmse, session_table, EvalError, SessionData,
    COMPARISON_MODELS,
};
use seqpress_core::features::{
    beat_features, detect_ecg_r_peaks, detect_ppg_fiducials, extract_features, normalize_features, BeatFiducials,
    FeatureError, FeatureSequence, Fiducial, FiducialSamples, QualityIssue,
};
use seqpress_core::math::Matrix;
use seqpress_core::rng::SeqRng;
use seqpress_core::rnn::{
    bilstm_forward, deeprnn_forward, lstm_cell_forward, residual_block_forward, BiLstmParams, HiddenState,
    LstmParams, NetworkConfig, NetworkParams,
};
use seqpress_core::synth::{generate_feature_cohort, generate_waveform_cohort, SessionSpec, SynthConfig, WaveformSynthConfig};
use seqpress_core::train::{
    clip_gradients, loss_gradient, make_windows, multitask_loss, multitask_vs_singletask, normalize_targets,
    prepare_dataset, pretrain_finetune, split_dataset, train, AdamHyper, AdamState, Recording, Sequential,
    SplitFractions, TargetScaling, TrainConfig, TrainError, TrainingSample,
};

use crate::common::{close, ensure, max_abs_diff, naive_forward, naive_lstm, random_pair, Outcome};

type Check = Result<(), String>;

fn err(e: impl std::fmt::Debug) -> String {
    format!("{e:?}")
}

pub fn run() -> Outcome {
    let examples: Vec<(&str, fn() -> Check)> = vec![
        ("ecg impulse train", ecg_impulses),
        ("ecg noisy impulse train", ecg_noisy),
        ("ecg flat signal", ecg_flat),
        ("ppg two-bump pulse", ppg_two_bump),
        ("ppg ramp without notch", ppg_ramp),
        ("constructed fiducial times", constructed_times),
        ("heart rate from R-R", heart_rate),
        ("systolic area rectangle", systolic_area),
        ("reflection index ratio", reflection_index),
        ("normalization [1,2,3]", normalize_123),
        ("normalization idempotence", normalize_idempotent),
        ("normalization degenerate column", normalize_degenerate),
        ("lstm cell at zero", cell_zero),
        ("lstm cell c=2", cell_c2),
        ("lstm cell saturated forget", cell_saturated),
        ("bilstm merge bias", bilstm_bias),
        ("bilstm single step", bilstm_single_step),
        ("bilstm reversal symmetry", bilstm_reversal),
        ("residual identity block", block_identity),
        ("residual telescoping", block_telescoping),
        ("residual block vs oracle", block_oracle),
        ("head at zero", head_zero),
        ("network shapes", network_shapes),
        ("network vs oracle", network_oracle),
        ("bptt zero upstream", bptt_zero_upstream),
        ("bptt b_o at zero", bptt_output_bias),
        ("bptt finite differences", bptt_finite_differences),
        ("gradcheck zero differences", gradcheck_zero),
        ("gradcheck fault injection", gradcheck_fault),
        ("decomposition direct path", decomposition_direct),
        ("decomposition through weights", decomposition_weights),
        ("loss examples", loss_examples),
        ("clip examples", clip_examples),
        ("adam examples", adam_examples),
        ("target scaling", target_scaling),
        ("windowing", windowing),
        ("split", split),
        ("training zero epochs and determinism", training_basics),
        ("finetune with zero epochs", finetune_zero),
        ("finetune ordering on shifted day 1", finetune_ordering),
        ("report shape and reproducibility", report_shape),
        ("chen baseline", chen),
        ("poon baseline", poon),
        ("kalman noiseless tracking", kalman_tracking),
        ("kalman huge R", kalman_huge_r),
        ("kalman identity dynamics", kalman_identity),
        ("ridge", ridge),
        ("synthetic determinism and oracle", synth_features),
        ("synthetic waveforms", synth_waveforms),
        ("rmse examples", rmse_examples),
        ("bland-altman examples", bland_altman_examples),
        ("multi-day evaluation", multiday),
        ("cli synth reproducible", cli_synth),
        ("cli missing input", cli_missing),
        ("cli gradcheck", cli_gradcheck),
    ];
    let total = examples.len();
    let mut failures = Vec::new();
    for (name, f) in examples {
        if let Err(e) = f() {
            failures.push(format!("{name}: {e}"));
        }
    }
    if failures.is_empty() {
        Ok(format!("{total}/{total} examples"))
    } else {
        Err(format!("{}/{total} examples failed: {}", failures.len(), failures.join(" | ")))
    }
}

// ---------------------------------------------------------------- features

fn impulse_train(fs: f64, seconds: f64, period: f64) -> Vec<f64> {
    let mut x = vec![0.0; (fs * seconds) as usize];
    let mut k = 0;
    while (k as f64) * period < seconds - 1e-9 {
        x[(k as f64 * period * fs).round() as usize] = 1.0;
        k += 1;
    }
    x
}

fn ecg_impulses() -> Check {
    let peaks = detect_ecg_r_peaks(&impulse_train(250.0, 10.0, 1.0), 250.0).map_err(err)?;
    let expected: Vec<f64> = (0..10).map(|k| k as f64).collect();
    ensure(peaks == expected, format!("{peaks:?}"))
}

fn ecg_noisy() -> Check {
    let fs = 360.0;
    let mut x = impulse_train(fs, 10.0, 1.0);
    let mut rng = SeqRng::new(53, 0);
    x.iter_mut().for_each(|v| *v += 0.01 * rng.uniform_range(-1.0, 1.0));
    let peaks = detect_ecg_r_peaks(&x, fs).map_err(err)?;
    ensure(peaks.len() == 10, format!("{} peaks", peaks.len()))?;
    for (k, t) in peaks.iter().enumerate() {
        ensure((t - k as f64).abs() <= 2.0 / fs + 1e-12, format!("peak {k} at {t}"))?;
    }
    Ok(())
}

fn ecg_flat() -> Check {
    ensure(detect_ecg_r_peaks(&[0.0; 2500], 250.0) == Err(FeatureError::NoBeatsDetected), "flat signal")
}

fn gauss(t: f64, mu: f64, w: f64) -> f64 {
    (-(t - mu) * (t - mu) / (2.0 * w * w)).exp()
}

const FS: f64 = 1000.0;

fn ppg_two_bump() -> Check {
    let ratio = 0.45;
    let beats = 6;
    let n = ((beats as f64 + 0.3) * FS) as usize;
    let mut ecg = vec![0.0; n];
    let mut ppg = vec![0.0; n];
    for k in 0..beats {
        let r = 0.1 + k as f64;
        for i in 0..n {
            let t = i as f64 / FS;
            ecg[i] += gauss(t, r, 0.008);
            ppg[i] += gauss(t, r + 0.3, 0.05) + ratio * gauss(t, r + 0.55, 0.05);
        }
    }
    let out = extract_features(&ecg, &ppg, FS).map_err(err)?;
    ensure(out.fiducials.len() == beats - 1, format!("{} beats", out.fiducials.len()))?;
    for b in &out.fiducials {
        // the inter-bump minimum of the pulse, located on a fine grid
        let r = b.r_peak_t;
        let f = |t: f64| gauss(t, r + 0.3, 0.05) + ratio * gauss(t, r + 0.55, 0.05);
        let tn = (0..=2500).map(|i| r + 0.3 + i as f64 * 1e-4).fold((0.0, f64::MAX), |best, t| {
            if f(t) < best.1 {
                (t, f(t))
            } else {
                best
            }
        });
        ensure((b.tn - tn.0).abs() <= 1.5 / FS, format!("notch at {} vs {}", b.tn - r, tn.0 - r))?;
        ensure((b.b / b.a - ratio).abs() / ratio < 0.02, format!("b/a {}", b.b / b.a))?;
    }
    Ok(())
}

fn ppg_ramp() -> Check {
    let beats = 5;
    let n = ((beats as f64 + 0.3) * FS) as usize;
    let mut ecg = vec![0.0; n];
    let mut ppg = vec![0.0; n];
    for k in 0..beats {
        let ri = ((0.1 + k as f64) * FS) as usize;
        ecg[ri] = 1.0;
        for i in 0..1000 {
            if ri + i < n {
                let t = i as f64 / FS;
                ppg[ri + i] = if t < 0.2 { t / 0.2 } else { 1.0 - (t - 0.2) / 0.8 };
            }
        }
    }
    let r = detect_ecg_r_peaks(&ecg, FS).map_err(err)?;
    let scan = detect_ppg_fiducials(&ppg, FS, &r).map_err(err)?;
    ensure(scan.beats.is_empty(), "ramp produced beats")?;
    ensure(
        scan.quality.iter().any(|q| matches!(q, QualityIssue::Missing { fiducial: Fiducial::Notch, .. })),
        "missing notch not logged",
    )
}

fn rect_beat() -> (Vec<f64>, BeatFiducials) {
    let ppg: Vec<f64> = (0..=800).map(|i| if i <= 400 { 1.0 } else { 0.0 }).collect();
    let beat = BeatFiducials {
        beat_index: 0,
        r_peak_t: 0.0,
        r_next_t: 0.8,
        max_slope_t: 0.0,
        tf: 0.0,
        tp: 0.2,
        tn: 0.4,
        tf_next: 0.8,
        a: 1.0,
        b: 0.5,
        samples: FiducialSamples { r_peak: 0, max_slope: 0, tf: 0, tp: 200, tn: 400, reflection: 500, tf_next: 800 },
    };
    (ppg, beat)
}

fn constructed_times() -> Check {
    let (ppg, beat) = rect_beat();
    let f = beat_features(&ppg, FS, &beat);
    ensure(f.up_time == 0.2 && f.st == 0.4, format!("up {} st {}", f.up_time, f.st))
}

fn heart_rate() -> Check {
    let (ppg, beat) = rect_beat();
    ensure(beat_features(&ppg, FS, &beat).hr == 75.0, "hr")
}

fn systolic_area() -> Check {
    // height 1 above a foot at 0: the first trapezoid contributes half a sample
    let (ppg, beat) = rect_beat();
    let mut lifted = ppg.clone();
    lifted[0] = 0.0;
    let f = beat_features(&lifted, FS, &beat);
    close(f.sv, 0.4 - 0.5 / FS, 1e-12, "rectangle")?;
    // a linear rise is integrated exactly
    let ramp: Vec<f64> = (0..=800).map(|i| if i <= 400 { i as f64 / 400.0 } else { 0.0 }).collect();
    close(beat_features(&ramp, FS, &beat).sv, 0.2, 1e-12, "triangle")
}

fn reflection_index() -> Check {
    let (ppg, beat) = rect_beat();
    ensure(beat_features(&ppg, FS, &beat).ri == 0.5, "ri")
}

fn seq(columns: &[[f64; 3]]) -> FeatureSequence {
    let rows: Vec<[f64; 7]> = (0..3).map(|i| std::array::from_fn(|k| columns[k % columns.len()][i])).collect();
    FeatureSequence::raw(vec![0.0, 1.0, 2.0], rows)
}

fn normalize_123() -> Check {
    let out = normalize_features(&seq(&[[1.0, 2.0, 3.0]]), None).map_err(err)?;
    let s = (1.5f64).sqrt();
    for k in 0..7 {
        close(out.values[0][k], -s, 1e-12, "low")?;
        close(out.values[1][k], 0.0, 1e-12, "mid")?;
        close(out.values[2][k], s, 1e-12, "high")?;
    }
    Ok(())
}

fn normalize_idempotent() -> Check {
    let once = normalize_features(&seq(&[[1.0, 2.0, 3.0], [-4.0, 0.5, 9.0]]), None).map_err(err)?;
    let twice = normalize_features(&FeatureSequence::raw(once.times.clone(), once.values.clone()), None).map_err(err)?;
    for (a, b) in once.values.iter().zip(&twice.values) {
        ensure(max_abs_diff(a, b) <= 1e-12, "renormalized values moved")?;
    }
    Ok(())
}

fn normalize_degenerate() -> Check {
    let r = normalize_features(&seq(&[[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]]), None);
    ensure(r == Err(FeatureError::DegenerateFeature(1)), format!("{r:?}"))
}

// ---------------------------------------------------------------- rnn

fn scalar_cell() -> LstmParams {
    LstmParams::zeros(1, 1)
}

fn cell_zero() -> Check {
    let p = LstmParams::zeros(3, 2);
    let (s, g) = lstm_cell_forward(&p, &[0.7, -1.2, 3.0], &HiddenState::zeros(2)).map_err(err)?;
    ensure(g.f == [0.5, 0.5] && g.i == [0.5, 0.5] && g.o == [0.5, 0.5], "gates")?;
    ensure(s.c == [0.0, 0.0] && s.h == [0.0, 0.0], "state")
}

fn cell_c2() -> Check {
    let (s, _) = lstm_cell_forward(&scalar_cell(), &[0.3], &HiddenState { h: vec![0.0], c: vec![2.0] }).map_err(err)?;
    ensure(s.c == [1.0], format!("c {:?}", s.c))?;
    close(s.h[0], 0.5 * 1f64.tanh(), 1e-15, "h")?;
    close(s.h[0], 0.380797, 1e-6, "h rounded")
}

fn cell_saturated() -> Check {
    let mut p = scalar_cell();
    p.b_f[0] = 100.0;
    let (s, _) = lstm_cell_forward(&p, &[0.0], &HiddenState { h: vec![0.0], c: vec![3.0] }).map_err(err)?;
    close(s.c[0], 3.0, 1e-12, "c")?;
    close(s.h[0], 0.497527, 1e-6, "h")
}

fn bilstm_bias() -> Check {
    let mut p = BiLstmParams::zeros(7, 4, true);
    p.b_h = vec![0.25, -1.0, 3.0, 0.0];
    let (x, _) = random_pair(6, 1);
    let (out, _) = bilstm_forward(&p, &x).map_err(err)?;
    ensure((0..6).all(|t| out.row(t) == p.b_h.as_slice()), "outputs differ from b_h")
}

fn random_bilstm(hidden: usize, seed: u64) -> BiLstmParams {
    let net = NetworkParams::init(NetworkConfig::new(hidden, 1, 4), seed).unwrap();
    let mut p = net.bilstm;
    let mut rng = SeqRng::new(seed, 5);
    p.b_h.iter_mut().for_each(|b| *b = rng.normal());
    p
}

fn bilstm_single_step() -> Check {
    let p = random_bilstm(3, 17);
    let (x, _) = random_pair(1, 17);
    let (out, _) = bilstm_forward(&p, &x).map_err(err)?;
    let (hf, _) = lstm_cell_forward(&p.fwd, x.row(0), &HiddenState::zeros(3)).map_err(err)?;
    let (hb, _) = lstm_cell_forward(p.bwd.as_ref().unwrap(), x.row(0), &HiddenState::zeros(3)).map_err(err)?;
    let wb = p.w_b_merge.as_ref().unwrap();
    for j in 0..3 {
        let mut v = p.b_h[j];
        v += (0..3).map(|c| p.w_f_merge.get(j, c) * hf.h[c]).sum::<f64>();
        v += (0..3).map(|c| wb.get(j, c) * hb.h[c]).sum::<f64>();
        close(out.get(0, j), v, 1e-14, "merged output")?;
    }
    Ok(())
}

fn bilstm_reversal() -> Check {
    let p = random_bilstm(4, 23);
    let (x, _) = random_pair(7, 23);
    let (out, _) = bilstm_forward(&p, &x).map_err(err)?;
    let swapped = BiLstmParams {
        fwd: p.bwd.clone().unwrap(),
        bwd: Some(p.fwd.clone()),
        w_f_merge: p.w_b_merge.clone().unwrap(),
        w_b_merge: Some(p.w_f_merge.clone()),
        b_h: p.b_h.clone(),
    };
    let (rev, _) = bilstm_forward(&swapped, &x.reversed_rows()).map_err(err)?;
    // same terms, summed in the other order
    let d = max_abs_diff(rev.reversed_rows().as_slice(), out.as_slice());
    ensure(d <= 1e-15 * 8.0, format!("max difference {d:e}"))
}

fn block_identity() -> Check {
    let (x, _) = random_pair(5, 3);
    let x = Matrix::from_fn(5, 4, |t, c| x.get(t, c));
    let out = residual_block_forward(&LstmParams::zeros(4, 4), &x, 1).map_err(err)?;
    ensure(out.trace.h.as_slice().iter().all(|v| *v == 0.0), "h not zero")?;
    ensure(out.next == x, "identity block changed its input")
}

fn block_telescoping() -> Check {
    let net = NetworkParams::init(NetworkConfig::new(5, 5, 6), 31).unwrap();
    let (x, _) = random_pair(6, 31);
    let (_, cache) = deeprnn_forward(&net, &x, true).map_err(err)?;
    let cache = cache.unwrap();
    let levels = cache.stream.len();
    for l in 0..levels {
        for m in l + 1..levels {
            for i in 0..cache.stream[l].as_slice().len() {
                let sum: f64 = (l..m).map(|k| cache.blocks[k].h.as_slice()[i]).sum();
                let d = cache.stream[m].as_slice()[i] - cache.stream[l].as_slice()[i];
                ensure((d - sum).abs() < 1e-12, format!("levels {l}..{m}: {:e}", (d - sum).abs()))?;
            }
        }
    }
    Ok(())
}

fn block_oracle() -> Check {
    let mut rng = SeqRng::new(41, 0);
    let mut p = LstmParams::zeros(3, 3);
    for (_, _, data) in p.tensors_mut() {
        data.iter_mut().for_each(|v| *v = rng.uniform_range(-0.5, 0.5));
    }
    let x = Matrix::from_fn(2, 3, |_, _| rng.normal());
    let out = residual_block_forward(&p, &x, 1).map_err(err)?;
    let rows: Vec<Vec<f64>> = (0..2).map(|t| x.row(t).to_vec()).collect();
    let h = naive_lstm(&p, &rows);
    for t in 0..2 {
        for j in 0..3 {
            close(out.next.get(t, j), h[t][j] + x.get(t, j), 1e-12, "block output")?;
        }
    }
    Ok(())
}

fn head_zero() -> Check {
    let mut net = NetworkParams::init(NetworkConfig::new(4, 3, 5), 2).unwrap();
    net.head = seqpress_core::rnn::OutputHeadParams::zeros(4);
    let (x, _) = random_pair(5, 2);
    let (z, _) = deeprnn_forward(&net, &x, false).map_err(err)?;
    ensure(z.as_slice().iter().all(|v| *v == 0.5), "z != 0.5")
}

fn network_shapes() -> Check {
    let net = NetworkParams::init(NetworkConfig::new(128, 4, 32), 1).unwrap();
    let (x, _) = random_pair(32, 1);
    let (z, cache) = deeprnn_forward(&net, &x, true).map_err(err)?;
    let cache = cache.unwrap();
    ensure(z.shape() == (32, 3), format!("z {:?}", z.shape()))?;
    let layers = 1 + cache.blocks.len();
    ensure(layers == 4, format!("{layers} layers cached"))?;
    ensure(cache.first.fwd.h.rows() == 32 && cache.blocks.iter().all(|b| b.h.shape() == (32, 128)), "cache steps")
}

fn network_oracle() -> Check {
    for (layers, bidirectional, residual) in [(2, true, true), (3, true, true), (1, true, true), (3, false, false)] {
        let cfg = NetworkConfig { bidirectional, residual, ..NetworkConfig::new(3, layers, 3) };
        let mut net = NetworkParams::init(cfg, 43).unwrap();
        let mut rng = SeqRng::new(43, 1);
        for t in net.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = rng.uniform_range(-0.8, 0.8));
        }
        let (x, _) = random_pair(3, 43);
        let (z, _) = deeprnn_forward(&net, &x, false).map_err(err)?;
        let oracle: Vec<f64> = naive_forward(&net, &x).concat();
        let d = max_abs_diff(z.as_slice(), &oracle);
        ensure(d <= 1e-12, format!("L{layers}: {d:e}"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- bptt

fn bptt_zero_upstream() -> Check {
    let net = NetworkParams::init(NetworkConfig::new(4, 3, 5), 5).unwrap();
    let (x, _) = random_pair(5, 5);
    let (_, cache) = deeprnn_forward(&net, &x, true).map_err(err)?;
    let back = deeprnn_backward(&net, &cache.unwrap(), &Matrix::zeros(5, 3)).map_err(err)?;
    ensure(back.grads.to_flat().iter().all(|v| *v == 0.0), "non-zero gradient")?;
    ensure(back.input.as_slice().iter().all(|v| *v == 0.0), "non-zero input gradient")
}

fn bptt_output_bias() -> Check {
    let cfg = NetworkConfig { input_size: 7, bidirectional: false, ..NetworkConfig::new(1, 1, 1) };
    let net = NetworkParams::zeros(cfg).map_err(err)?;
    let (x, y) = random_pair(1, 6);
    let (z, cache) = deeprnn_forward(&net, &x, true).map_err(err)?;
    let back = deeprnn_backward(&net, &cache.unwrap(), &loss_gradient(&z, &y, 1.0, None)).map_err(err)?;
    // σ'(0)·tanh(c) with c = 0
    ensure(back.grads.bilstm.fwd.b_o == [0.0], format!("{:?}", back.grads.bilstm.fwd.b_o))
}

fn bptt_finite_differences() -> Check {
    let net = NetworkParams::init(NetworkConfig::new(4, 3, 5), 77).unwrap();
    let (x, y) = random_pair(5, 77);
    let r = finite_difference_check(&net, &x, &y, 1e-4, 1e-5, 77).map_err(err)?;
    ensure(r.max_rel_err < 1e-6, format!("{:e} at {:?}", r.max_rel_err, r.worst))
}

fn gradcheck_zero() -> Check {
    let net = NetworkParams::init(NetworkConfig::new(4, 2, 3), 8).unwrap();
    let coords = sample_coordinates(&net, 200, 8);
    let r = check_coordinates(&net, &net.zeros_like(), &coords, 1e-5, 8, |_, _| 0.0);
    ensure(r.max_rel_err == 0.0 && r.flagged.is_empty() && r.checked >= 200, format!("{r:?}"))
}

fn gradcheck_fault() -> Check {
    let net = NetworkParams::init(NetworkConfig::new(4, 2, 3), 9).unwrap();
    let (x, y) = random_pair(3, 9);
    let (_, mut g) = sample_gradient(&net, &x, &y, 0.0).map_err(err)?;
    let coords = sample_coordinates(&net, 200, 9);
    let (ti, ei) = coords[coords.len() / 2];
    let truth = g.clone();
    g.tensors_mut()[ti].data[ei] += 1.0;
    let r = check_coordinates(&net, &g, &coords, 1e-5, 9, |t, e| truth.tensors()[t].data[e]);
    let names: Vec<String> = net.tensors().into_iter().map(|t| t.name).collect();
    ensure(
        r.flagged.len() == 1 && r.flagged[0].tensor == names[ti] && r.flagged[0].index == ei,
        format!("flagged {:?}", r.flagged),
    )
}

fn decomposition_direct() -> Check {
    let mut net = NetworkParams::init(NetworkConfig::new(4, 4, 4), 10).unwrap();
    for b in net.stack.iter_mut() {
        *b = LstmParams::zeros(4, 4);
    }
    let (x, y) = random_pair(4, 10);
    let r = residual_gradient_decomposition_check(&net, &x, &y).map_err(err)?;
    ensure(r.direct_path_max_abs_err == 0.0, format!("{:e}", r.direct_path_max_abs_err))
}

fn decomposition_weights() -> Check {
    let net = NetworkParams::init(NetworkConfig::new(5, 4, 5), 11).unwrap();
    let (x, y) = random_pair(5, 11);
    let r = residual_gradient_decomposition_check(&net, &x, &y).map_err(err)?;
    ensure(r.through_weights_max_rel_err < 1e-5, format!("{:e}", r.through_weights_max_rel_err))?;
    ensure(r.telescoping_max_abs_err < 1e-12, format!("{:e}", r.telescoping_max_abs_err))
}

// ---------------------------------------------------------------- training

fn loss_examples() -> Check {
    let y = Matrix::from_rows(&[[1.0, 1.0, 1.0]]);
    let z = Matrix::from_rows(&[[0.5, 0.5, 0.5]]);
    ensure(multitask_loss(&y, &y, 3.0, 0.0) == Ok(0.0), "z = y")?;
    ensure(multitask_loss(&z, &y, 0.0, 0.0) == Ok(0.75), "0.75")?;
    close(multitask_loss(&z, &y, 2.0, 0.1).map_err(err)?, 0.95, 1e-15, "0.95")
}

fn grads_from(v: &[f64]) -> NetworkParams {
    let cfg = NetworkConfig { input_size: 1, bidirectional: false, ..NetworkConfig::new(1, 1, 1) };
    let mut g = NetworkParams::zeros(cfg).unwrap();
    let mut flat = vec![0.0; g.param_count()];
    flat[..v.len()].copy_from_slice(v);
    g.load_flat(&flat).unwrap();
    g
}

fn clip_examples() -> Check {
    let mut g = grads_from(&[6.0, 8.0]);
    ensure(clip_gradients(&mut g, 5.0) == 10.0, "reported norm")?;
    ensure(g.to_flat()[..2] == [3.0, 4.0], format!("{:?}", &g.to_flat()[..2]))?;
    let mut g = grads_from(&[3.0, 4.0]);
    clip_gradients(&mut g, 5.0);
    ensure(g.to_flat()[..2] == [3.0, 4.0], "boundary changed")?;
    let mut g = grads_from(&[]);
    clip_gradients(&mut g, 5.0);
    ensure(g.to_flat().iter().all(|v| *v == 0.0), "zero changed")
}

fn adam_examples() -> Check {
    let hyper = AdamHyper::default();
    let mut s = AdamState::new(4, hyper);
    let mut p = [0.0; 4];
    s.step_slice(&mut p, &[1.0; 4], 0.001);
    for v in p {
        close(v, -0.000999999, 1e-9, "first step")?;
    }
    let mut s = AdamState::new(3, hyper);
    let mut p = [1.0, -2.0, 3.0];
    s.step_slice(&mut p, &[0.0; 3], 0.001);
    ensure(p == [1.0, -2.0, 3.0], "zero gradient moved parameters")?;
    // constant gradient: m̂ = g and v̂ = g², so each step is lr·|g|/(|g|+ε)
    let mut s = AdamState::new(2, hyper);
    let mut p = [0.0, 0.0];
    let lr = 0.01;
    for _ in 0..2 {
        let before = p;
        s.step_slice(&mut p, &[0.3, -7.0], lr);
        for (a, b) in p.iter().zip(before) {
            ensure((a - b).abs() <= lr * (1.0 + 1e-12), format!("step {}", (a - b).abs()))?;
        }
    }
    Ok(())
}

fn target_scaling() -> Check {
    let rows = [[100.0, 60.0, 70.0], [120.0, 80.0, 90.0], [150.0, 70.0, 100.0]];
    let (scaled, s) = normalize_targets(&rows).map_err(err)?;
    ensure(s.max[0] == 150.0, "max")?;
    close(scaled[0][0], 2.0 / 3.0, 1e-15, "100")?;
    ensure(scaled[1][0] == 0.8 && scaled[2][0] == 1.0, "120/150")?;
    for (r, sc) in rows.iter().zip(&scaled) {
        ensure(max_abs_diff(&s.invert(sc), r) <= 1e-12, "round trip")?;
    }
    let held = TargetScaling { max: s.max }.apply(&[160.0, 70.0, 90.0]);
    close(held[0], 1.0667, 1e-4, "held-out 160")?;
    ensure(seqpress_core::train::count_above_one(&[held]) == 1, "above-one flag")
}

fn windowing() -> Check {
    let rows = |n: usize| (vec![[0.0; 7]; n], vec![[1.0; 3]; n]);
    let (f, t) = rows(64);
    let w = make_windows(&f, &t, 32, 16, "s", "d").map_err(err)?;
    ensure(w.iter().map(|s| s.offset).collect::<Vec<_>>() == [0, 16, 32], "offsets")?;
    let (f, t) = rows(32);
    ensure(make_windows(&f, &t, 32, 16, "s", "d").map_err(err)?.len() == 1, "length 32")?;
    let (f, t) = rows(31);
    ensure(
        make_windows(&f, &t, 32, 16, "s", "d") == Err(TrainError::SourceTooShort { len: 31, seq_len: 32 }),
        "length 31",
    )
}

fn tagged(n: usize, subjects: usize) -> Vec<TrainingSample> {
    (0..n)
        .map(|i| TrainingSample {
            x: Matrix::zeros(1, 7),
            y: Matrix::zeros(1, 3),
            subject_id: format!("S{}", i % subjects),
            session_label: "day1".into(),
            offset: i,
        })
        .collect()
}

fn split() -> Check {
    let f = SplitFractions::default();
    let a = split_dataset(tagged(60, 3), f, 4).map_err(err)?;
    let b = split_dataset(tagged(60, 3), f, 4).map_err(err)?;
    ensure(a == b, "same seed, different split")?;
    ensure((a.train.len(), a.val.len(), a.test.len()) == (42, 6, 12), "sizes")?;
    ensure(matches!(split_dataset(tagged(3, 1), f, 4), Err(TrainError::EmptySplit(_))), "three windows")
}

fn small_cohort(seed: u64) -> Vec<Recording> {
    generate_feature_cohort(&SynthConfig {
        seed,
        num_subjects: 3,
        samples_per_session: 120,
        sessions: vec![SessionSpec::new("static", 0.0), SessionSpec::new("day1", 1.0)],
        ..SynthConfig::default()
    })
    .unwrap()
    .recordings()
}

fn tiny_train() -> (NetworkConfig, TrainConfig) {
    (
        NetworkConfig::new(4, 2, 8),
        TrainConfig { seed: 3, batch_size: 8, max_epochs: 2, finetune_epochs: 2, ..TrainConfig::default() },
    )
}

fn training_basics() -> Check {
    let data = prepare_dataset(&small_cohort(3), 8, 4, SplitFractions::default(), 3).map_err(err)?;
    let (net, tc) = tiny_train();
    let zero = train(&TrainConfig { max_epochs: 0, ..tc.clone() }, net, &data, &Sequential).map_err(err)?;
    ensure(zero.params == NetworkParams::init(net, tc.seed).unwrap(), "zero-epoch run moved parameters")?;
    let a = train(&tc, net, &data, &Sequential).map_err(err)?;
    let b = train(&tc, net, &data, &Sequential).map_err(err)?;
    let bits = |p: &NetworkParams| p.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    ensure(bits(&a.params) == bits(&b.params) && a.history == b.history, "training not reproducible")
}

fn finetune_zero() -> Check {
    let recs = small_cohort(5);
    let split = |label: &str| recs.iter().filter(|r| r.session_label == label).cloned().collect::<Vec<_>>();
    let (net, tc) = tiny_train();
    let tc = TrainConfig { finetune_epochs: 0, stride: Some(4), ..tc };
    let pf = pretrain_finetune(&split("static"), &split("day1"), net, &tc, &Sequential).map_err(err)?;
    ensure(pf.finetuned.params == pf.pretrained.params, "finetuned parameters differ")
}

fn finetune_ordering() -> Check {
    let cohort = generate_feature_cohort(&SynthConfig {
        seed: 12,
        num_subjects: 4,
        samples_per_session: 400,
        drift_magnitude: 8.0,
        sessions: vec![SessionSpec::new("static", 0.0), SessionSpec::new("day1", 1.0)],
        ..SynthConfig::default()
    })
    .unwrap();
    let net = NetworkConfig::new(8, 2, 16);
    let tc = TrainConfig {
        seed: 12,
        batch_size: 16,
        max_epochs: 8,
        learning_rate: 5e-3,
        finetune_epochs: 10,
        finetune_lr_factor: 0.5,
        stride: Some(8),
        ..TrainConfig::default()
    };
    let pf = pretrain_finetune(&cohort.session("static"), &cohort.session("day1"), net, &tc, &Sequential).map_err(err)?;
    let hold = SessionData::group(&pf.day1_holdout);
    let pre = multiday_eval("pre", &pf.pretrained, "s", &hold).map_err(err)?.rmse[0].unwrap();
    let post = multiday_eval("post", &pf.finetuned, "s", &hold).map_err(err)?.rmse[0].unwrap();
    ensure(post <= pre, format!("finetuned {post:.3} > pretrained {pre:.3}"))
}

fn report_shape() -> Check {
    let data = prepare_dataset(&small_cohort(7), 8, 4, SplitFractions::default(), 7).map_err(err)?;
    let (net, tc) = tiny_train();
    let a = ablation_residual(NetworkConfig::new(4, 3, 8), &tc, &data, &Sequential).map_err(err)?;
    let b = ablation_residual(NetworkConfig::new(4, 3, 8), &tc, &data, &Sequential).map_err(err)?;
    ensure(a == b, "ablation not reproducible")?;
    let (with, without) = a.grad_norm_history();
    ensure(with.len() == 2 && without.len() == 2, "gradient-norm history length")?;
    let rows = multitask_vs_singletask(&[2], net, &tc, &data, &Sequential).map_err(err)?;
    ensure(rows.len() == 2 && rows.iter().any(|r| r.multitask) && rows.iter().any(|r| !r.multitask), "task rows")?;
    let t = comparison_table(&[("BLR", [Some(7.0), Some(6.0), None]), ("DeepRNN-4L", [Some(4.0), Some(3.0), None])]);
    ensure(t.rows.len() == 2 && t.columns.len() == 2 && t.footer.len() == COMPARISON_MODELS.len() + 1, "comparison table")
}

// ---------------------------------------------------------------- baselines

fn chen() -> Check {
    let cal = ChenCalibration { sbp_cal: 118.0, ptt_cal: 0.25, k: 80.0 };
    ensure(ptt_chen_predict(&cal, &[0.25; 3]) == vec![Some(118.0); 3], "constant PTT")?;
    let ptt: Vec<f64> = (0..30).map(|i| 0.2 + 0.004 * i as f64).collect();
    let pc = ptt.iter().sum::<f64>() / ptt.len() as f64;
    let sbp: Vec<f64> = ptt.iter().map(|p| 120.0 + 100.0 * (pc - p) / pc).collect();
    let cal = ptt_chen_fit(&ptt, &sbp).map_err(err)?;
    close(cal.k, 100.0, 1e-6, "K")?;
    for (p, s) in ptt_chen_predict(&cal, &ptt).iter().zip(&sbp) {
        close(p.unwrap(), *s, 1e-9, "prediction")?;
    }
    ensure(
        matches!(ptt_chen_fit(&[0.3; 20], &[120.0; 20]), Err(BaselineError::InsufficientCalibration { .. })),
        "constant calibration PTT",
    )
}

fn poon() -> Check {
    let ptt: Vec<f64> = (0..20).map(|i| 0.18 + 0.01 * i as f64).collect();
    let sbp: Vec<f64> = ptt.iter().map(|p| 92.0 + 2.2 / (p * p)).collect();
    let dbp: Vec<f64> = ptt.iter().map(|p| 61.0 + 0.7 / (p * p)).collect();
    let (cal, rejected) = ptt_poon_fit(&ptt, &sbp, &dbp).map_err(err)?;
    ensure(rejected.is_empty(), "rejected beats")?;
    for ((p, s), d) in ptt_poon_predict(&cal, &ptt).iter().zip(&sbp).zip(&dbp) {
        let (ps, pd) = p.unwrap();
        close(ps, *s, 1e-8, "sbp")?;
        close(pd, *d, 1e-8, "dbp")?;
    }
    let flat_sbp: Vec<f64> = (0..12).map(|i| 110.0 + i as f64).collect();
    let (cal, _) = ptt_poon_fit(&[0.3; 12], &flat_sbp, &[70.0; 12]).map_err(err)?;
    ensure(ptt_poon_predict(&cal, &[0.25])[0] == Some((115.5, 70.0)), "intercept-only")?;
    let mut bad = ptt.clone();
    bad[2] = 0.0;
    bad[7] = -0.1;
    let (_, rejected) = ptt_poon_fit(&bad, &sbp, &dbp).map_err(err)?;
    ensure(rejected == [2, 7], format!("rejected {rejected:?}"))?;
    ensure(ptt_poon_predict(&cal, &[-0.2]) == vec![None], "negative PTT predicted")
}

fn test_c() -> SMatrix<f64, 7, 3> {
    SMatrix::<f64, 7, 3>::from_fn(|i, j| ((i * 3 + j * 5) % 7) as f64 * 0.1 - 0.3 + if i == j { 1.0 } else { 0.0 })
}

fn rotation(th: f64) -> Matrix3<f64> {
    Matrix3::new(th.cos(), -th.sin(), 0.0, th.sin(), th.cos(), 0.0, 0.0, 0.0, 1.0)
}

fn kalman_model(a: Matrix3<f64>, q: f64, r: f64, x0: Vector3<f64>, p0: f64) -> KalmanModel {
    KalmanModel {
        a,
        c: test_c(),
        q: Matrix3::identity() * q,
        r: SMatrix::<f64, 7, 7>::identity() * r,
        state_mean: Vector3::new(120.0, 80.0, 93.0),
        feature_mean: SVector::<f64, 7>::zeros(),
        initial_state: x0,
        initial_cov: Matrix3::identity() * p0,
    }
}

fn kalman_tracking() -> Check {
    let a = rotation(0.1);
    let model = kalman_model(a, 0.0, 1e-6, Vector3::zeros(), 100.0);
    let mut x = Vector3::new(8.0, -5.0, 3.0);
    let mut truth = Vec::new();
    let mut obs = Vec::new();
    for _ in 0..200 {
        let y = model.c * x;
        obs.push(std::array::from_fn(|i| y[i]));
        truth.push(x + model.state_mean);
        x = a * x;
    }
    let run = kalman_filter(&model, &obs).map_err(err)?;
    let worst = run.means[50..]
        .iter()
        .zip(&truth[50..])
        .map(|(m, t)| (0..3).map(|k| (m[k] - t[k]).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    ensure(worst < 1e-6, format!("steady-state error {worst:e}"))
}

fn kalman_huge_r() -> Check {
    let a = rotation(0.2) * 0.99;
    let x0 = Vector3::new(5.0, 1.0, -2.0);
    let model = kalman_model(a, 0.0, 1e9, x0, 1.0);
    let mut rng = SeqRng::new(14, 0);
    let obs: Vec<[f64; 7]> = (0..40).map(|_| std::array::from_fn(|_| 20.0 * rng.normal())).collect();
    let run = kalman_filter(&model, &obs).map_err(err)?;
    let mut x = x0;
    for m in &run.means {
        let expected = x + model.state_mean;
        for k in 0..3 {
            close(m[k], expected[k], 1e-5, "autonomous dynamics")?;
        }
        x = a * x;
    }
    Ok(())
}

fn kalman_identity() -> Check {
    let model = kalman_model(Matrix3::identity(), 0.0, 1e12, Vector3::new(1.0, -1.0, 0.5), 1e-6);
    let run = kalman_filter(&model, &vec![[5.0; 7]; 25]).map_err(err)?;
    for m in &run.means {
        close(m[0], 121.0, 1e-9, "sbp")?;
        close(m[1], 79.0, 1e-9, "dbp")?;
        close(m[2], 93.5, 1e-9, "mbp")?;
    }
    Ok(())
}

fn ridge() -> Check {
    let mut rng = SeqRng::new(15, 0);
    let x = DMatrix::from_fn(50, 4, |_, _| rng.normal());
    let w_true = DMatrix::from_row_slice(4, 2, &[1.5, -0.5, 2.0, 0.25, -3.0, 1.0, 0.5, 0.0]);
    let y = &x * &w_true;
    let (w, b) = ridge_solve(&x, &y, 1e-12, false).map_err(err)?;
    ensure((&w - &w_true).abs().max() < 1e-8 && b.abs().max() == 0.0, "exact recovery")?;

    let y = DMatrix::from_fn(50, 1, |i, _| 3.0 * x[(i, 0)] + 7.0);
    let (w, b) = ridge_solve(&x, &y, 1e14, true).map_err(err)?;
    let mean = y.mean();
    ensure(w.abs().max() < 1e-10 && (b[0] - mean).abs() < 1e-8, format!("intercept {} vs mean {mean}", b[0]))?;

    let (w, _) = ridge_solve(&DMatrix::from_row_slice(2, 1, &[1.0, 2.0]), &DMatrix::from_row_slice(2, 1, &[2.0, 4.0]), 1e-12, false)
        .map_err(err)?;
    close(w[(0, 0)], 2.0, 1e-10, "single feature weight")?;

    // per-recording form used by the comparison
    let rec = Recording {
        subject_id: "S01".into(),
        session_label: "day1".into(),
        features: (0..40).map(|_| std::array::from_fn(|_| rng.normal())).collect(),
        targets: vec![],
    };
    let rec = Recording {
        targets: rec.features.iter().map(|f| [110.0 + 4.0 * f[0] - f[3], 70.0 + 2.0 * f[6], 90.0 + f[1]]).collect(),
        ..rec
    };
    let m = linreg_fit(&[rec.clone()], 1e-10).map_err(err)?;
    for (f, t) in rec.features.iter().zip(&rec.targets) {
        ensure(max_abs_diff(&m.predict_row(f), t) < 1e-8, "linear targets not recovered")?;
    }
    Ok(())
}

// ---------------------------------------------------------------- synthetic data

fn poly2_rows(f: &[f64; 7]) -> Vec<f64> {
    let mut out = vec![1.0];
    out.extend_from_slice(f);
    for i in 0..7 {
        for j in i..7 {
            out.push(f[i] * f[j]);
        }
    }
    out
}

/// In-sample RMSE of a least-squares degree-2 fit from one feature row to BP.
fn memoryless_fit_rmse(recs: &[Recording]) -> [f64; 3] {
    let rows: Vec<(&[f64; 7], &[f64; 3])> = recs.iter().flat_map(|r| r.features.iter().zip(&r.targets)).collect();
    // features are affine in the generator's signals; standardize for conditioning
    let mean: Vec<f64> = (0..7).map(|k| rows.iter().map(|r| r.0[k]).sum::<f64>() / rows.len() as f64).collect();
    let sd: Vec<f64> = (0..7)
        .map(|k| (rows.iter().map(|r| (r.0[k] - mean[k]).powi(2)).sum::<f64>() / rows.len() as f64).sqrt())
        .collect();
    let design: Vec<Vec<f64>> =
        rows.iter().map(|r| poly2_rows(&std::array::from_fn(|k| (r.0[k] - mean[k]) / sd[k]))).collect();
    let x = DMatrix::from_fn(rows.len(), design[0].len(), |i, j| design[i][j]);
    let y = DMatrix::from_fn(rows.len(), 3, |i, k| rows[i].1[k]);
    let w = x.clone().svd(true, true).solve(&y, 1e-9).unwrap();
    let res = &y - &x * w;
    std::array::from_fn(|k| (res.column(k).norm_squared() / rows.len() as f64).sqrt())
}

fn synth_features() -> Check {
    let cfg = SynthConfig { seed: 16, num_subjects: 2, samples_per_session: 100, ..SynthConfig::default() };
    ensure(generate_feature_cohort(&cfg).map_err(err)? == generate_feature_cohort(&cfg).map_err(err)?, "determinism")?;

    let noiseless = SynthConfig {
        seed: 16,
        rho: 0.0,
        sigma_obs: 0.0,
        num_subjects: 20,
        samples_per_session: 500,
        sessions: vec![SessionSpec::new("day1", 0.0)],
        ..SynthConfig::default()
    };
    let c = generate_feature_cohort(&noiseless).map_err(err)?;
    let fitted = memoryless_fit_rmse(&c.recordings());
    ensure(fitted.iter().chain(&c.oracle_rmse).all(|r| *r < 1e-3), format!("noiseless {fitted:?} / {:?}", c.oracle_rmse))?;

    let noisy = SynthConfig { rho: 0.9, sigma_obs: 2.5, num_subjects: 100, samples_per_session: 1000, ..noiseless };
    let c = generate_feature_cohort(&noisy).map_err(err)?;
    let recs = c.recordings();
    let fitted = memoryless_fit_rmse(&recs);
    for k in 0..3 {
        let v: Vec<f64> = recs.iter().flat_map(|r| r.targets.iter().map(move |t| t[k])).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
        let explained = 1.0 - c.oracle_rmse[k] * c.oracle_rmse[k] / var;
        ensure(explained <= 0.5, format!("channel {k}: features explain {explained:.2}"))?;
        ensure(
            (fitted[k] - c.oracle_rmse[k]).abs() <= 0.03 * c.oracle_rmse[k],
            format!("channel {k}: independent fit {:.3} vs reported {:.3}", fitted[k], c.oracle_rmse[k]),
        )?;
    }
    Ok(())
}

fn synth_waveforms() -> Check {
    let cfg = WaveformSynthConfig { hr_mean: 75.0, hr_spread: 0.0, num_subjects: 1, ..Default::default() };
    let w = generate_waveform_cohort(&cfg).map_err(err)?;
    ensure(w == generate_waveform_cohort(&cfg).map_err(err)?, "determinism")?;
    let r = &w[0].record;
    let ex = extract_features(&r.ecg, &r.ppg, r.sample_rate).map_err(err)?;
    for pair in ex.r_peaks.windows(2) {
        ensure((pair[1] - pair[0] - 0.8).abs() <= 1.0 / r.sample_rate + 1e-12, format!("R-R {}", pair[1] - pair[0]))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- evaluation

fn rmse_examples() -> Check {
    ensure(rmse(&[120.0, 80.0], &[120.0, 80.0]) == Ok(0.0), "equal")?;
    close(rmse(&[120.0, 130.0], &[124.0, 127.0]).map_err(err)?, 12.5f64.sqrt(), 1e-12, "two values")?;
    close(rmse(&[120.0, 130.0], &[124.0, 127.0]).map_err(err)?, 3.5355, 1e-4, "rounded")?;
    ensure(rmse(&[3.0], &[0.0]) == Ok(3.0), "single")
}

fn bland_altman_examples() -> Check {
    let b = bland_altman(&[102.0, 92.0, 112.0], &[100.0, 90.0, 110.0]).map_err(err)?;
    ensure(
        (b.mean_diff, b.sd_diff, b.lower, b.upper, b.fraction_within) == (2.0, 0.0, 2.0, 2.0, 1.0),
        format!("{b:?}"),
    )?;
    let b = bland_altman(&[1.0, -1.0], &[0.0, 0.0]).map_err(err)?;
    ensure(b.mean_diff == 0.0 && b.sd_diff == 1.0 && b.fraction_within == 1.0, format!("{b:?}"))?;
    close(b.upper, 1.96, 1e-15, "upper")?;
    close(b.lower, -1.96, 1e-15, "lower")
}

fn multiday() -> Check {
    ensure(
        matches!(
            multiday_eval("x", &linreg_fit(&small_cohort(1), 1.0).map_err(err)?, "d", &[]),
            Err(EvalError::MissingSession(_))
        ),
        "empty session list",
    )?;
    let recs = generate_feature_cohort(&SynthConfig { seed: 18, num_subjects: 3, ..SynthConfig::default() })
        .map_err(err)?
        .recordings();
    let ridge = linreg_fit(&recs, 1.0).map_err(err)?;
    let sessions = SessionData::group(&recs);
    let report = multiday_eval("BLR", &ridge, "synthetic", &sessions).map_err(err)?;
    let labels: Vec<&str> = report.sessions.iter().map(|s| s.session.as_str()).collect();
    ensure(labels == ["static", "day1", "day2", "day4", "month6"], format!("{labels:?}"))?;
    let t = session_table(&[report], 0);
    ensure(t.rows.len() == 1 && t.columns.len() == 5, "session table shape")
}

// ---------------------------------------------------------------- command line

fn seqpress(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_seqpress")).args(args).current_dir(dir).output().expect("run binary")
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    out.sort();
    out
}

fn cli_synth() -> Check {
    let tmp = tempfile::tempdir().map_err(err)?;
    for d in ["d", "d2"] {
        let o = seqpress(&["--seed", "7", "--out-dir", d, "synth", "--subjects", "2", "--samples", "80"], tmp.path());
        ensure(o.status.success(), String::from_utf8_lossy(&o.stderr).into_owned())?;
    }
    let (a, b) = (dir_bytes(&tmp.path().join("d")), dir_bytes(&tmp.path().join("d2")));
    ensure(!a.is_empty() && a == b, "datasets differ")
}

fn cli_missing() -> Check {
    let tmp = tempfile::tempdir().map_err(err)?;
    let o = seqpress(&["--out-dir", "o", "train", "--data", "no_such_dataset"], tmp.path());
    let stderr = String::from_utf8_lossy(&o.stderr);
    ensure(o.status.code() == Some(2), format!("exit {:?}", o.status.code()))?;
    ensure(stderr.contains("no_such_dataset"), format!("message {stderr:?}"))
}

fn cli_gradcheck() -> Check {
    let tmp = tempfile::tempdir().map_err(err)?;
    let o = seqpress(&["--out-dir", "g", "gradcheck", "--hidden", "4", "--layers", "3", "--seq-len", "5"], tmp.path());
    ensure(o.status.success(), String::from_utf8_lossy(&o.stderr).into_owned())?;
    let text = std::fs::read_to_string(tmp.path().join("g/gradcheck.json")).map_err(err)?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(err)?;
    let e = v["max_rel_err"].as_f64().ok_or("max_rel_err missing")?;
    ensure(e < 1e-5 && v["checked"].as_u64().unwrap_or(0) >= 200, format!("{text}"))
}
