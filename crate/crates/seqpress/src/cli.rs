use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use seqpress_core::baselines::{kalman_fit, linreg_fit, PttChen, PttPoon};
use seqpress_core::bptt::finite_difference_check;
use seqpress_core::eval::{
    ablation_residual, comparison_table, multiday_eval, session_table, EvalReport, Predictor, SessionData,
    COMPARISON_MODELS,
};
use seqpress_core::features::extract_features;
use seqpress_core::math::Matrix;
use seqpress_core::rng::SeqRng;
use seqpress_core::rnn::{NetworkConfig, NetworkParams};
use seqpress_core::synth::{generate_feature_cohort, generate_waveform_cohort};
use seqpress_core::train::{
    count_above_one, multitask_vs_singletask, prepare_dataset, pretrain_finetune, train, Checkpoint, PreparedData, Recording,
    TrainConfig,
};
use seqpress_core::{FEATURE_COUNT, TARGET_COUNT};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::RunConfig;
use crate::error::{AppError, Result};
use crate::exec::executor_from_env;
use crate::formats::{read_dataset, read_waveform, write_feature_csv, write_json, write_sqpw, write_synth_dataset};
use crate::report::{write_bland_altman, write_history, write_table};

#[derive(Debug, Parser)]
#[command(name = "seqpress", version, about = "Blood-pressure sequence models: features, training, baselines, evaluation")]
pub struct Cli {
    /// Seed applied to training, synthesis and sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract per-beat features from ECG/PPG recordings (CSV or SQPW).
    Extract(ExtractArgs),
    /// Generate a synthetic feature cohort, or waveform recordings.
    Synth(SynthArgs),
    /// Train a network on a dataset directory.
    Train(TrainArgs),
    /// Pre-train on one session and fine-tune on the start of another.
    Finetune(FinetuneArgs),
    /// Evaluate a checkpoint per session.
    Eval(EvalArgs),
    /// Fit and evaluate a classical baseline.
    Baseline(BaselineArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Train with and without residual connections.
    Ablate(AblateArgs),
    /// Full model comparison table and multi-task comparison.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Waveform files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = "")]
    pub session: String,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generate ECG/PPG waveforms instead of a feature cohort.
    #[arg(long)]
    pub waveforms: bool,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args, Clone)]
pub struct NetArgs {
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long)]
    pub unidirectional: bool,
    #[arg(long)]
    pub no_residual: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Restrict the loss to these channels.
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<Channel>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Channel {
    Sbp,
    Dbp,
    Mbp,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory (manifest.json).
    #[arg(long)]
    pub data: PathBuf,
    /// Train on these sessions only.
    #[arg(long, value_delimiter = ',')]
    pub sessions: Option<Vec<String>>,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "static")]
    pub pretrain_session: String,
    #[arg(long, default_value = "day1")]
    pub finetune_session: String,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "model")]
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineKind {
    PttChen,
    PttPoon,
    Blr,
    Kalman,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub model: BaselineKind,
    /// Session used for fitting; the first session when absent.
    #[arg(long)]
    pub fit_session: Option<String>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 4)]
    pub hidden: usize,
    #[arg(long, default_value_t = 3)]
    pub layers: usize,
    #[arg(long, default_value_t = 5)]
    pub seq_len: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub lambda: f64,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Session used for fitting every model; the first session when absent.
    #[arg(long)]
    pub fit_session: Option<String>,
    #[command(flatten)]
    pub net: NetArgs,
}

/// Parses `argv` and runs the command. Returns the process exit code.
pub fn run(argv: impl IntoIterator<Item = std::ffi::OsString>) -> u8 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => crate::error::EXIT_USAGE,
            };
        }
    };
    match execute(&cli) {
        Ok(()) => crate::error::EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::resolve(cli.config.as_deref(), cli.seed)?;
    let out = cli.out_dir.as_path();
    fs::create_dir_all(out).map_err(|e| AppError::io(out, e))?;
    match &cli.command {
        Command::Extract(a) => extract(a, out),
        Command::Synth(a) => synth(a, &cfg, out),
        Command::Train(a) => train_cmd(a, &cfg, out),
        Command::Finetune(a) => finetune(a, &cfg, out),
        Command::Eval(a) => eval_cmd(a, out),
        Command::Baseline(a) => baseline(a, &cfg, out),
        Command::Gradcheck(a) => gradcheck(a, &cfg, out),
        Command::Ablate(a) => ablate(a, &cfg, out),
        Command::Report(a) => report(a, &cfg, out),
    }
}

fn extract(a: &ExtractArgs, out: &Path) -> Result<()> {
    for input in &a.inputs {
        let rec = read_waveform(input)?;
        let ex = extract_features(&rec.ecg, &rec.ppg, rec.sample_rate)?;
        let mut seq = ex.features;
        seq.subject_id = rec.subject_id.clone();
        seq.session_label = a.session.clone();
        write_feature_csv(&out.join(format!("{}_features.csv", rec.subject_id)), &seq, &ex.quality)?;
    }
    Ok(())
}

fn synth(a: &SynthArgs, cfg: &RunConfig, out: &Path) -> Result<()> {
    if a.waveforms {
        let mut wc = cfg.waveform_synth.clone();
        if let Some(n) = a.subjects {
            wc.num_subjects = n;
        }
        if let Some(n) = a.samples {
            wc.beats_per_record = n;
        }
        for (i, w) in generate_waveform_cohort(&wc)?.into_iter().enumerate() {
            let name = seqpress_core::synth::subject_name(i);
            write_sqpw(&out.join(format!("{name}.sqpw")), &w.record)?;
            let truth: Vec<_> = w
                .truth
                .iter()
                .map(|b| {
                    serde_json::json!({
                        "r_peak_t": b.r_peak_t, "r_next_t": b.r_next_t, "max_slope_t": b.max_slope_t,
                        "tf": b.tf, "tp": b.tp, "tn": b.tn, "reflection_t": b.reflection_t,
                        "tf_next": b.tf_next, "features": b.features.to_array(),
                    })
                })
                .collect();
            write_json(&out.join(format!("{name}_truth.json")), &truth)?;
        }
        return Ok(());
    }
    let mut sc = cfg.synth.clone();
    if let Some(n) = a.subjects {
        sc.num_subjects = n;
    }
    if let Some(n) = a.samples {
        sc.samples_per_session = n;
    }
    let cohort = generate_feature_cohort(&sc)?;
    write_synth_dataset(out, &cohort)
}

fn net_and_train(cfg: &RunConfig, a: &NetArgs) -> (NetworkConfig, TrainConfig) {
    let mut net = cfg.network;
    let mut tc = cfg.train.clone();
    if let Some(v) = a.hidden {
        net.hidden_size = v;
    }
    if let Some(v) = a.layers {
        net.num_layers = v;
    }
    if let Some(v) = a.seq_len {
        net.seq_len = v;
    }
    if a.unidirectional {
        net.bidirectional = false;
    }
    if a.no_residual {
        net.residual = false;
    }
    if let Some(v) = a.epochs {
        tc.max_epochs = v;
    }
    if let Some(v) = a.lr {
        tc.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        tc.batch_size = v;
    }
    if let Some(ch) = &a.channels {
        tc.channels = [ch.contains(&Channel::Sbp), ch.contains(&Channel::Dbp), ch.contains(&Channel::Mbp)];
    }
    (net, tc)
}

fn select(recs: &[Recording], sessions: &[String], data: &Path) -> Result<Vec<Recording>> {
    let picked: Vec<Recording> = recs.iter().filter(|r| sessions.contains(&r.session_label)).cloned().collect();
    if picked.is_empty() {
        return Err(AppError::format(data, format!("no recordings for session(s) {}", sessions.join(","))));
    }
    Ok(picked)
}

fn first_session(recs: &[Recording], requested: &Option<String>, data: &Path) -> Result<Vec<Recording>> {
    let label = match requested {
        Some(l) => l.clone(),
        None => recs.first().map(|r| r.session_label.clone()).ok_or_else(|| AppError::format(data, "empty dataset"))?,
    };
    select(recs, &[label], data)
}

fn prepare(recs: &[Recording], net: &NetworkConfig, tc: &TrainConfig) -> Result<PreparedData> {
    Ok(prepare_dataset(recs, net.seq_len, tc.stride_for(net.seq_len), tc.fractions(), tc.seed)?)
}

#[derive(Serialize)]
struct TrainSummary {
    network: NetworkConfig,
    parameters: usize,
    epochs: usize,
    best_val_loss: Option<f64>,
    test_rmse: Option<[f64; TARGET_COUNT]>,
    targets_above_one: usize,
}

fn train_cmd(a: &TrainArgs, cfg: &RunConfig, out: &Path) -> Result<()> {
    let (net, tc) = net_and_train(cfg, &a.net);
    let mut recs = read_dataset(&a.data)?;
    if let Some(s) = &a.sessions {
        recs = select(&recs, s, &a.data)?;
    }
    let data = prepare(&recs, &net, &tc)?;
    let exec = executor_from_env();
    let ck = train(&tc, net, &data, exec.as_ref())?;
    save_checkpoint(&out.join("model.sqpc"), &ck)?;
    write_history(&out.join("history.csv"), &ck.history)?;
    let scaled: Vec<_> = recs.iter().flat_map(|r| r.targets.iter().map(|t| data.targets.apply(t))).collect();
    let above = count_above_one(&scaled);
    let summary = TrainSummary {
        network: net,
        parameters: ck.params.param_count(),
        epochs: ck.history.len(),
        best_val_loss: ck.history.iter().map(|e| e.val_loss).reduce(f64::min),
        test_rmse: if data.split.test.is_empty() { None } else { Some(ck.window_rmse(&data.split.test)?) },
        targets_above_one: above,
    };
    write_json(&out.join("train_summary.json"), &summary)
}

fn finetune(a: &FinetuneArgs, cfg: &RunConfig, out: &Path) -> Result<()> {
    let (net, tc) = net_and_train(cfg, &a.net);
    let recs = read_dataset(&a.data)?;
    let stat = select(&recs, std::slice::from_ref(&a.pretrain_session), &a.data)?;
    let day1 = select(&recs, std::slice::from_ref(&a.finetune_session), &a.data)?;
    let exec = executor_from_env();
    let r = pretrain_finetune(&stat, &day1, net, &tc, exec.as_ref())?;
    save_checkpoint(&out.join("pretrained.sqpc"), &r.pretrained)?;
    save_checkpoint(&out.join("finetuned.sqpc"), &r.finetuned)?;
    write_history(&out.join("pretrain_history.csv"), &r.pretrained.history)?;
    write_history(&out.join("finetune_history.csv"), &r.finetuned.history)?;

    let mut sessions = vec![SessionData { label: format!("{}-holdout", a.finetune_session), recordings: r.day1_holdout }];
    sessions.extend(
        SessionData::group(&recs)
            .into_iter()
            .filter(|s| s.label != a.pretrain_session && s.label != a.finetune_session),
    );
    let reports = vec![
        multiday_eval("pretrained", &r.pretrained, &dataset_name(&a.data), &sessions)?,
        multiday_eval("finetuned", &r.finetuned, &dataset_name(&a.data), &sessions)?,
    ];
    write_json(&out.join("finetune_report.json"), &reports)?;
    write_session_tables(out, &reports)
}

fn dataset_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string())
}

fn write_session_tables(out: &Path, reports: &[EvalReport]) -> Result<()> {
    for (k, name) in ["sbp", "dbp"].iter().enumerate() {
        write_table(out, &format!("sessions_{name}"), &session_table(reports, k))?;
    }
    Ok(())
}

fn write_eval(out: &Path, stem: &str, report: &EvalReport) -> Result<()> {
    write_json(&out.join(format!("{stem}.json")), report)?;
    for (k, name) in ["sbp", "dbp"].iter().enumerate() {
        if let Some(ba) = &report.bland_altman[k] {
            write_bland_altman(&out.join(format!("{stem}_bland_altman_{name}.csv")), ba)?;
        }
    }
    Ok(())
}

fn eval_cmd(a: &EvalArgs, out: &Path) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let recs = read_dataset(&a.data)?;
    let report = multiday_eval(&a.name, &ck, &dataset_name(&a.data), &SessionData::group(&recs))?;
    write_eval(out, "eval_report", &report)?;
    write_session_tables(out, std::slice::from_ref(&report))
}

fn fit_baseline(kind: BaselineKind, fit: &[Recording], cfg: &RunConfig) -> Result<Box<dyn Predictor>> {
    let beats = cfg.baseline.calibration_beats;
    Ok(match kind {
        BaselineKind::PttChen => Box::new(PttChen::fit(fit, beats)?),
        BaselineKind::PttPoon => Box::new(PttPoon::fit(fit, beats)?),
        BaselineKind::Blr => Box::new(linreg_fit(fit, cfg.baseline.ridge_alpha)?),
        BaselineKind::Kalman => Box::new(kalman_fit(fit)?),
    })
}

fn baseline_name(kind: BaselineKind) -> &'static str {
    match kind {
        BaselineKind::PttChen => COMPARISON_MODELS[0],
        BaselineKind::PttPoon => COMPARISON_MODELS[1],
        BaselineKind::Blr => COMPARISON_MODELS[2],
        BaselineKind::Kalman => COMPARISON_MODELS[3],
    }
}

fn baseline(a: &BaselineArgs, cfg: &RunConfig, out: &Path) -> Result<()> {
    let recs = read_dataset(&a.data)?;
    let fit = first_session(&recs, &a.fit_session, &a.data)?;
    let model = fit_baseline(a.model, &fit, cfg)?;
    let name = baseline_name(a.model);
    let report = multiday_eval(name, model.as_ref(), &dataset_name(&a.data), &SessionData::group(&recs))?;
    let stem = format!("baseline_{}", name.to_lowercase());
    write_eval(out, &stem, &report)
}

#[derive(Serialize)]
struct GradcheckOutput {
    max_rel_err: f64,
    coordinate: Option<String>,
    analytic: Option<f64>,
    numeric: Option<f64>,
    checked: usize,
    flagged: usize,
    epsilon: f64,
    seed: u64,
}

fn gradcheck(a: &GradcheckArgs, cfg: &RunConfig, out: &Path) -> Result<()> {
    let seed = cfg.train.seed;
    let net_cfg = NetworkConfig { hidden_size: a.hidden, num_layers: a.layers, seq_len: a.seq_len, ..cfg.network };
    net_cfg.validate()?;
    let net = NetworkParams::init(net_cfg, seed)?;
    let mut rng = SeqRng::new(seed, 0x6763);
    let x = Matrix::from_fn(a.seq_len, FEATURE_COUNT, |_, _| rng.normal());
    let y = Matrix::from_fn(a.seq_len, TARGET_COUNT, |_, _| rng.uniform_range(0.3, 1.0));
    let r = finite_difference_check(&net, &x, &y, a.lambda, a.epsilon, seed)?;
    let w = r.worst.as_ref();
    let report = GradcheckOutput {
        max_rel_err: r.max_rel_err,
        coordinate: w.map(|c| format!("{}[{}]", c.tensor, c.index)),
        analytic: w.map(|c| c.analytic),
        numeric: w.map(|c| c.numeric),
        checked: r.checked,
        flagged: r.flagged.len(),
        epsilon: r.epsilon,
        seed: r.seed,
    };
    write_json(&out.join("gradcheck.json"), &report)?;
    if !r.max_rel_err.is_finite() {
        return Err(AppError::Numerical("gradient check produced a non-finite error".into()));
    }
    Ok(())
}

fn ablate(a: &AblateArgs, cfg: &RunConfig, out: &Path) -> Result<()> {
    let (net, tc) = net_and_train(cfg, &a.net);
    let recs = read_dataset(&a.data)?;
    let data = prepare(&recs, &net, &tc)?;
    let exec = executor_from_env();
    let r = ablation_residual(net, &tc, &data, exec.as_ref())?;
    write_table(out, "ablation", &r.table)?;
    write_history(&out.join("history_residual.csv"), &r.with_residual.history)?;
    write_history(&out.join("history_plain.csv"), &r.without_residual.history)?;
    Ok(())
}

/// Networks in the comparison table: (name, layers, bidirectional).
const NETWORK_ROWS: [(&str, usize, bool); 5] =
    [("LSTM", 1, false), ("BiLSTM", 1, true), ("DeepRNN-2L", 2, true), ("DeepRNN-3L", 3, true), ("DeepRNN-4L", 4, true)];

fn report(a: &ReportArgs, cfg: &RunConfig, out: &Path) -> Result<()> {
    let (net, tc) = net_and_train(cfg, &a.net);
    let recs = read_dataset(&a.data)?;
    let fit = first_session(&recs, &a.fit_session, &a.data)?;
    let data = prepare(&fit, &net, &tc)?;
    let test = test_recordings(&fit, &data);
    let test_sessions = SessionData::group(&test);
    let all_sessions = SessionData::group(&recs);
    let dataset = dataset_name(&a.data);
    let exec = executor_from_env();

    let mut results: Vec<(&str, [Option<f64>; TARGET_COUNT])> = Vec::new();
    let mut session_reports = Vec::new();
    for kind in [BaselineKind::PttChen, BaselineKind::PttPoon, BaselineKind::Blr, BaselineKind::Kalman] {
        let model = fit_baseline(kind, &fit, cfg)?;
        let r = multiday_eval(baseline_name(kind), model.as_ref(), &dataset, &test_sessions)?;
        results.push((baseline_name(kind), r.rmse));
        session_reports.push(multiday_eval(baseline_name(kind), model.as_ref(), &dataset, &all_sessions)?);
    }
    for (name, layers, bidirectional) in NETWORK_ROWS {
        let ck: Checkpoint = train(&tc, NetworkConfig { num_layers: layers, bidirectional, ..net }, &data, exec.as_ref())?;
        results.push((name, multiday_eval(name, &ck, &dataset, &test_sessions)?.rmse));
        write_history(&out.join(format!("history_{}.csv", name.to_lowercase())), &ck.history)?;
        session_reports.push(multiday_eval(name, &ck, &dataset, &all_sessions)?);
    }
    write_table(out, "comparison", &comparison_table(&results))?;
    write_session_tables(out, &session_reports)?;
    write_json(&out.join("session_reports.json"), &session_reports)?;

    let rows = multitask_vs_singletask(&[2, 3, 4], net, &tc, &data, exec.as_ref())?;
    write_json(&out.join("multitask.json"), &rows)
}

/// Recordings restricted to the rows covered by test windows, one slice per
/// contiguous run of test windows.
fn test_recordings(fit: &[Recording], data: &PreparedData) -> Vec<Recording> {
    let t = data.seq_len;
    let mut out = Vec::new();
    for rec in fit {
        let mut spans: Vec<(usize, usize)> = data
            .split
            .test
            .iter()
            .filter(|s| s.subject_id == rec.subject_id && s.session_label == rec.session_label)
            .map(|s| (s.offset, s.offset + t))
            .collect();
        spans.sort_unstable();
        let mut merged: Vec<(usize, usize)> = Vec::new();
        for (a, b) in spans {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        out.extend(merged.into_iter().map(|(a, b)| rec.slice(a, b)));
    }
    out
}
