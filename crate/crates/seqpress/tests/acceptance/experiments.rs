use seqpress_core::baselines::linreg_fit;
use seqpress_core::eval::{multiday_eval, SessionData};
use seqpress_core::rnn::{deeprnn_forward, NetworkConfig, NetworkParams};
use seqpress_core::synth::{generate_feature_cohort, SessionSpec, SynthConfig};
use seqpress_core::train::{
    data::windows_with, fit, mean_squared_error, prepare_dataset, pretrain_finetune, train, Sequential,
    SplitFractions, TrainConfig,
};

use crate::common::{ensure, Outcome};

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

pub fn overfit() -> Outcome {
    let cohort = generate_feature_cohort(&SynthConfig {
        seed: 4,
        num_subjects: 1,
        samples_per_session: 64,
        sessions: vec![SessionSpec::new("day1", 0.0)],
        ..SynthConfig::default()
    })
    .map_err(err)?;
    let data = prepare_dataset(&cohort.recordings(), 16, 16, SplitFractions { train: 1.0, val: 0.0, test: 0.0 }, 4)
        .map_err(err)?;
    let windows = &data.split.train;
    ensure(windows.len() == 4, format!("{} windows", windows.len()))?;
    let net = NetworkConfig { hidden_size: 16, num_layers: 2, seq_len: 16, ..NetworkConfig::default() };
    let cfg = TrainConfig {
        seed: 4,
        batch_size: 4,
        learning_rate: 1e-2,
        lambda: 0.0,
        max_epochs: 2000,
        max_steps: Some(2000),
        ..TrainConfig::default()
    };
    let out = fit(&cfg, NetworkParams::init(net, 4).map_err(err)?, windows, &[], &Sequential).map_err(err)?;
    let mut mse = 0.0;
    for w in windows {
        let (z, _) = deeprnn_forward(&out.params, &w.x, false).map_err(err)?;
        mse += mean_squared_error(&z, &w.y, None) / windows.len() as f64;
    }
    ensure(out.steps <= 2000, format!("{} steps", out.steps))?;
    ensure(mse < 1e-3, format!("training MSE {mse:.2e} after {} steps", out.steps))?;
    Ok(format!("training MSE {mse:.2e} after {} steps", out.steps))
}

/// RNN test RMSE and ridge test RMSE as multiples of the memoryless oracle.
fn advantage_run(seed: u64) -> Result<([f64; 3], [f64; 3]), String> {
    let base = SynthConfig {
        seed,
        num_subjects: 12,
        samples_per_session: 1000,
        sessions: vec![SessionSpec::new("day1", 0.0)],
        ..SynthConfig::default()
    };
    let train_cohort = generate_feature_cohort(&base).map_err(err)?;
    let val_cohort = generate_feature_cohort(&SynthConfig { seed: seed + 500, num_subjects: 2, ..base.clone() }).map_err(err)?;
    let test_cohort = generate_feature_cohort(&SynthConfig { seed: seed + 1000, ..base.clone() }).map_err(err)?;
    let r0 = train_cohort.oracle_rmse;

    let seq_len = 32;
    let mut data = prepare_dataset(
        &train_cohort.recordings(),
        seq_len,
        8,
        SplitFractions { train: 1.0, val: 0.0, test: 0.0 },
        seed,
    )
    .map_err(err)?;
    for rec in val_cohort.recordings() {
        data.split.val.extend(windows_with(&rec, seq_len, 16, &data.features, &data.targets).map_err(err)?);
    }
    let cfg = TrainConfig {
        seed,
        batch_size: 32,
        max_epochs: 60,
        learning_rate: 3e-3,
        early_stop_patience: 8,
        ..TrainConfig::default()
    };
    let net = NetworkConfig { hidden_size: 16, num_layers: 2, seq_len, ..NetworkConfig::default() };
    let ck = train(&cfg, net, &data, &Sequential).map_err(err)?;
    let sessions = SessionData::group(&test_cohort.recordings());
    let rnn = multiday_eval("DeepRNN-2L", &ck, "synthetic", &sessions).map_err(err)?;
    let ridge = linreg_fit(&train_cohort.recordings(), 1.0).map_err(err)?;
    let lin = multiday_eval("BLR", &ridge, "synthetic", &sessions).map_err(err)?;
    let ratio = |r: &[Option<f64>; 3]| -> [f64; 3] { std::array::from_fn(|k| r[k].unwrap() / r0[k]) };
    Ok((ratio(&rnn.rmse), ratio(&lin.rmse)))
}

pub fn temporal_advantage() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in [1u64, 2, 3] {
        let (rnn, lin) = advantage_run(seed)?;
        let pass = rnn.iter().all(|v| *v <= 0.8) && lin.iter().all(|v| *v >= 0.95);
        ok &= pass;
        lines.push(format!(
            "seed {seed}: rnn/R0 {:.3}/{:.3}/{:.3} ridge/R0 {:.3}/{:.3}/{:.3}",
            rnn[0], rnn[1], rnn[2], lin[0], lin[1], lin[2]
        ));
    }
    let detail = lines.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

pub fn multiday_decay() -> Outcome {
    let cfg = SynthConfig { seed: 6, num_subjects: 8, samples_per_session: 600, ..SynthConfig::default() };
    let cohort = generate_feature_cohort(&cfg).map_err(err)?;

    // frozen memoryless baseline fit on the static session only
    let ridge = linreg_fit(&cohort.session("static"), 1.0).map_err(err)?;
    let days: Vec<SessionData> = SessionData::group(&cohort.recordings())
        .into_iter()
        .filter(|s| s.label != "static")
        .collect();
    let report = multiday_eval("BLR", &ridge, "synthetic", &days).map_err(err)?;
    let sbp: Vec<f64> = report.sessions.iter().map(|s| s.pooled[0].unwrap()).collect();
    let labels: Vec<&str> = report.sessions.iter().map(|s| s.session.as_str()).collect();
    ensure(labels == ["day1", "day2", "day4", "month6"], format!("sessions {labels:?}"))?;
    for k in 0..3 {
        let series: Vec<f64> = report.sessions.iter().map(|s| s.pooled[k].unwrap()).collect();
        ensure(series.windows(2).all(|w| w[1] >= w[0]), format!("channel {k} RMSE not non-decreasing: {series:?}"))?;
    }

    let net = NetworkConfig { hidden_size: 16, num_layers: 2, seq_len: 32, ..NetworkConfig::default() };
    let tc = TrainConfig {
        seed: 6,
        batch_size: 32,
        max_epochs: 30,
        learning_rate: 3e-3,
        early_stop_patience: 6,
        stride: Some(8),
        train_fraction: 0.8,
        val_fraction: 0.2,
        test_fraction: 0.0,
        finetune_lr_factor: 0.3,
        finetune_epochs: 30,
        ..TrainConfig::default()
    };
    let pf = pretrain_finetune(&cohort.session("static"), &cohort.session("day1"), net, &tc, &Sequential).map_err(err)?;
    let holdout = SessionData::group(&pf.day1_holdout);
    let pre = multiday_eval("pretrained", &pf.pretrained, "synthetic", &holdout).map_err(err)?;
    let post = multiday_eval("finetuned", &pf.finetuned, "synthetic", &holdout).map_err(err)?;
    let (p, f) = (pre.rmse[0].unwrap(), post.rmse[0].unwrap());
    let detail = format!(
        "ridge SBP RMSE {:.2}/{:.2}/{:.2}/{:.2}; day-1 SBP RMSE pretrained {p:.2}, finetuned {f:.2}",
        sbp[0], sbp[1], sbp[2], sbp[3]
    );
    ensure(f <= p, detail.clone())?;
    Ok(detail)
}
