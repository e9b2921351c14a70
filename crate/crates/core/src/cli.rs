//! Command-line front end: `preprocess`, `train`, `evaluate`, `gradcheck`
//! and `synth`.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error, 3 data
//! error, 4 numerical failure.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::config::{checkpoint_name, ConfigError, Overrides, RunConfig};
use crate::dataset::{
    build_samples, parse_corpus, read_manifest, read_samples, split_dataset, write_samples, DatasetError,
    GroupManifest, SamplesHeader, SiteSample, SplitManifest,
};
use crate::diagnostics::{self, CheckRow};
use crate::embedding::EmbeddingError;
use crate::fsutil;
use crate::loss::LossMode;
use crate::metrics::{classify_report, roc_auc, roc_csv, MetricsError, MetricsReport};
use crate::synth::{self, SynthParams};
use crate::trainer::{run_trials, score_samples, labels_of, Aggregate, TrainError};

pub const THREADS_ENV: &str = "MUTADETECT_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DatasetError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Usage(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{failed} gradient check(s) failed")]
    GradCheck { failed: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::Embedding(_) | CliError::Checkpoint(_) | CliError::Io { .. } => 3,
            CliError::Train(e) if e.is_numeric() => 4,
            CliError::Train(_) => 1,
            CliError::Metrics(MetricsError::NonFinite(_)) => 4,
            CliError::Metrics(_) => 3,
            CliError::GradCheck { .. } => 4,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "mutadetect", version, about = "Predict per-site mutations in time-indexed protein corpora")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build labeled site samples and the split manifest from a corpus.
    Preprocess(RunArgs),
    /// Train every trial and write checkpoints, trials.json and curves.csv.
    Train(TrainArgs),
    /// Score one split with a checkpoint; writes report.json and roc.csv.
    Evaluate(EvaluateArgs),
    /// Finite-difference gradient checks for every primitive and the model.
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic corpus with planted mutations.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Input steps per sample.
    #[arg(long = "T", value_name = "N")]
    pub window: Option<usize>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long)]
    pub embedding_table: Option<PathBuf>,
    /// Dimension of generated vectors when no table is configured.
    #[arg(long)]
    pub embedding_dim: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    Hsc,
    Deepsad,
}

impl From<LossArg> for LossMode {
    fn from(a: LossArg) -> Self {
        match a {
            LossArg::Hsc => LossMode::Hsc,
            LossArg::Deepsad => LossMode::Deepsad,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Defaults to the trial-0 checkpoint in the output directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Replace the checkpoint's threshold (accepts `inf`).
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random points per primitive.
    #[arg(long, default_value_t = 10)]
    pub points: usize,
    /// Add a deliberately wrong gradient to the suite (it must fail).
    #[arg(long)]
    pub corrupt: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub cohorts: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub lineages: Option<usize>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out_dir: self.out.clone(),
            trials: self.trials,
            window: self.window,
            loss: self.loss.map(Into::into),
            embedding_table: self.embedding_table.clone(),
            embedding_dim: self.embedding_dim,
        }
    }

    pub fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&self.overrides())?;
        Ok(cfg)
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            e.exit_code()
        }
    }
}

/// Sizes the global worker pool from `MUTADETECT_THREADS` when set.
pub fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        // Fails only if a pool already exists, e.g. when called twice in tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Preprocess(a) => cmd_preprocess(&a.load()?, out).map(|_| ()),
        Command::Train(a) => {
            let mut cfg = a.run.load()?;
            if let Some(e) = a.epochs {
                cfg.train.epochs = e;
                cfg.validate()?;
            }
            cmd_train(&cfg, out).map(|_| ())
        }
        Command::Evaluate(a) => {
            let cfg = a.run.load()?;
            let ck = a.checkpoint.clone().unwrap_or_else(|| cfg.checkpoint_path(0));
            cmd_evaluate(&cfg, &ck, a.split, a.threshold, out).map(|_| ())
        }
        Command::Gradcheck(a) => cmd_gradcheck(a.seed, a.points, a.corrupt, out).map(|_| ()),
        Command::Synth(a) => cmd_synth(&a, out).map(|_| ()),
    }
}

fn say(out: &mut dyn Write, line: std::fmt::Arguments) {
    let _ = out.write_fmt(line);
    let _ = out.write_all(b"\n");
}

/// Runs the dataset pipeline and writes `samples.jsonl` and `manifest.json`.
pub fn cmd_preprocess(cfg: &RunConfig, out: &mut dyn Write) -> Result<SplitManifest, CliError> {
    let format = cfg.corpus_format()?;
    let cohorts = parse_corpus(&cfg.paths.corpus, format)?;
    info!("{} cohorts read from {}", cohorts.len(), cfg.paths.corpus.display());
    let table = cfg.embedding_table()?;
    let groups = build_samples(
        &cohorts,
        &cfg.dataset,
        cfg.split.per_cohort_cap,
        &table,
        cfg.seed,
    )?;
    let (_, counts) = split_dataset(&groups, &cfg.split)?;

    let mut samples: Vec<SiteSample> = Vec::new();
    let mut manifest_groups = Vec::with_capacity(groups.len());
    say(out, format_args!("{:>10} {:>9} {:>7} {:>7} {:>7} {:>8}", "label_time", "generated", "train", "val", "test", "mutated"));
    for (g, c) in groups.iter().zip(&counts) {
        let kept = &g.samples[..c.total()];
        let mutated = kept.iter().filter(|s| !s.is_normal()).count();
        say(out, format_args!(
            "{:>10} {:>9} {:>7} {:>7} {:>7} {:>8}",
            g.label_time,
            g.samples.len(),
            c.train,
            c.val,
            c.test,
            mutated
        ));
        manifest_groups.push(GroupManifest {
            label_time: g.label_time,
            offset: samples.len(),
            generated: g.samples.len(),
            counts: *c,
        });
        samples.extend_from_slice(kept);
    }
    let dim = table.dim();
    let header = SamplesHeader::new(samples.len(), cfg.dataset.window, dim);
    let samples_path = cfg.samples_path();
    write_samples(&samples_path, &header, &samples)?;
    let manifest = SplitManifest::new(
        "samples.jsonl".into(),
        cfg.seed,
        cfg.dataset.window,
        dim,
        manifest_groups,
    );
    let manifest_path = cfg.manifest_path();
    fsutil::write_json(&manifest_path, &manifest).map_err(io_err(&manifest_path))?;
    if table.missing_lookups() > 0 {
        log::warn!("{} trigram lookups used generated vectors", table.missing_lookups());
    }
    say(out, format_args!(
        "total: train {} val {} test {} -> {}",
        manifest.totals.train,
        manifest.totals.val,
        manifest.totals.test,
        samples_path.display()
    ));
    Ok(manifest)
}

fn load_splits(cfg: &RunConfig) -> Result<(SamplesHeader, crate::dataset::Splits), CliError> {
    let manifest = read_manifest(&cfg.manifest_path())?;
    let samples_path = cfg.paths.out_dir.join(&manifest.samples_file);
    let (header, samples) = read_samples(&samples_path)?;
    if manifest.window != header.window || manifest.dim != header.dim {
        return Err(DatasetError::Contract("manifest and samples file disagree on shape".into()).into());
    }
    if header.window != cfg.dataset.window {
        return Err(ConfigError::Invalid(format!(
            "samples were built with T = {} but the config asks for {}; rerun preprocess",
            header.window, cfg.dataset.window
        ))
        .into());
    }
    let splits = manifest.apply(&samples)?;
    Ok((header, splits))
}

#[derive(Serialize)]
struct TrialSummary<'a> {
    trial: usize,
    seed: u64,
    checkpoint: String,
    threshold: f64,
    val_f1: Vec<f64>,
    final_train_loss: Option<f64>,
    test: &'a MetricsReport,
}

#[derive(Serialize)]
struct TrialsFile<'a> {
    seed: u64,
    aggregate: &'a Aggregate,
    trials: Vec<TrialSummary<'a>>,
}

/// Trains all trials on the preprocessed splits.
pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<Aggregate, CliError> {
    let (header, splits) = load_splits(cfg)?;
    let model_cfg = cfg.model.with_input_dim(header.dim);
    info!(
        "training {} trial(s) on {} samples ({} val, {} test)",
        cfg.train.trials,
        splits.train.len(),
        splits.val.len(),
        splits.test.len()
    );
    let (results, agg) = run_trials(&splits, &model_cfg, &cfg.train, &cfg.loss, cfg.seed)?;

    let mut curves = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Usage(format!("curves.csv: {e}"));
    curves
        .write_record(["trial", "epoch", "train_loss", "val_f1"])
        .map_err(csv_err)?;
    for r in &results {
        Checkpoint::from_fitted(&r.fitted, r.trial, r.seed).save(&cfg.checkpoint_path(r.trial))?;
        for e in &r.fitted.curve {
            curves
                .write_record([
                    r.trial.to_string(),
                    e.epoch.to_string(),
                    e.train_loss.to_string(),
                    e.val_f1.to_string(),
                ])
                .map_err(csv_err)?;
        }
    }
    let curves_bytes = curves.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
    let curves_path = cfg.paths.out_dir.join("curves.csv");
    fsutil::write_atomic(&curves_path, &curves_bytes).map_err(io_err(&curves_path))?;

    let file = TrialsFile {
        seed: cfg.seed,
        aggregate: &agg,
        trials: results
            .iter()
            .map(|r| TrialSummary {
                trial: r.trial,
                seed: r.seed,
                checkpoint: checkpoint_name(r.trial),
                threshold: r.fitted.threshold,
                val_f1: r.fitted.curve.iter().map(|e| e.val_f1).collect(),
                final_train_loss: r.fitted.curve.last().map(|e| e.train_loss),
                test: &r.test,
            })
            .collect(),
    };
    let trials_path = cfg.paths.out_dir.join("trials.json");
    fsutil::write_json(&trials_path, &file).map_err(io_err(&trials_path))?;

    say(out, format_args!("{:>6} {:>8} {:>8} {:>9} {:>8}", "trial", "AUC", "F1", "precision", "recall"));
    for r in &results {
        let auc = r.test.auc.map_or("-".to_string(), |a| format!("{a:.4}"));
        say(out, format_args!(
            "{:>6} {:>8} {:>8.4} {:>9.4} {:>8.4}",
            r.trial, auc, r.test.f1, r.test.precision, r.test.recall
        ));
    }
    let pm = |m: f64, s: f64| format!("{m:.4} ± {s:.4}");
    let auc = if agg.auc_trials == 0 {
        "- (single-class test sets)".to_string()
    } else {
        pm(agg.mean.auc, agg.std.auc)
    };
    say(out, format_args!(
        "mean over {} trial(s): AUC {}  F1 {}  precision {}  recall {}",
        agg.trials,
        auc,
        pm(agg.mean.f1, agg.std.f1),
        pm(agg.mean.precision, agg.std.precision),
        pm(agg.mean.recall, agg.std.recall)
    ));
    Ok(agg)
}

/// Scores one split with a checkpoint and writes `report.json` and `roc.csv`.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    checkpoint: &Path,
    split: SplitArg,
    threshold: Option<f64>,
    out: &mut dyn Write,
) -> Result<MetricsReport, CliError> {
    let fitted = Checkpoint::load(checkpoint)?.into_fitted()?;
    let (header, splits) = load_splits(cfg)?;
    if header.dim != fitted.model.config.input_dim {
        return Err(DatasetError::Contract(format!(
            "checkpoint expects input dimension {} but samples have {}",
            fitted.model.config.input_dim, header.dim
        ))
        .into());
    }
    let samples = match split {
        SplitArg::Train => &splits.train,
        SplitArg::Val => &splits.val,
        SplitArg::Test => &splits.test,
    };
    if samples.is_empty() {
        return Err(DatasetError::Contract(format!("the {split:?} split is empty")).into());
    }
    let scores = score_samples(&fitted.model, &fitted.loss, samples)?;
    let labels = labels_of(samples);
    let threshold = threshold.unwrap_or(fitted.threshold);
    let report = classify_report(&scores, &labels, threshold)?;

    let report_path = cfg.paths.out_dir.join("report.json");
    fsutil::write_json(&report_path, &report).map_err(io_err(&report_path))?;
    let roc_bytes = match roc_auc(&scores, &labels) {
        Ok(curve) => roc_csv(&curve).map_err(|e| CliError::Usage(format!("roc.csv: {e}")))?,
        Err(MetricsError::SingleClass(_)) => b"threshold,fpr,tpr\n".to_vec(),
        Err(e) => return Err(e.into()),
    };
    let roc_path = cfg.paths.out_dir.join("roc.csv");
    fsutil::write_atomic(&roc_path, &roc_bytes).map_err(io_err(&roc_path))?;

    let auc = report.auc.map_or("-".to_string(), |a| format!("{a:.4}"));
    say(out, format_args!(
        "{:?} split: {} samples, AUC {auc}, F1 {:.4}, precision {:.4}, recall {:.4}, threshold {}",
        split,
        samples.len(),
        report.f1,
        report.precision,
        report.recall,
        report.threshold
    ));
    Ok(report)
}

/// Runs the gradient-check suite and prints one row per check.
pub fn cmd_gradcheck(seed: u64, points: usize, corrupt: bool, out: &mut dyn Write) -> Result<Vec<CheckRow>, CliError> {
    if points == 0 {
        return Err(CliError::Usage("--points must be positive".into()));
    }
    let mut rows = diagnostics::full_suite(seed, points).map_err(TrainError::from)?;
    if corrupt {
        let control = diagnostics::corrupted_gradient_control(seed).map_err(TrainError::from)?;
        rows.push(CheckRow {
            name: "corrupted_gradient".into(),
            passed: control.max_rel_error < control.tolerance,
            ..control
        });
    }
    say(out, format_args!("{:<32} {:>12} {:>10}  result", "check", "max_rel_err", "tolerance"));
    for r in &rows {
        say(out, format_args!(
            "{:<32} {:>12.3e} {:>10.0e}  {}",
            r.name,
            r.max_rel_error,
            r.tolerance,
            if r.passed { "pass" } else { "FAIL" }
        ));
    }
    let failed = rows.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::GradCheck { failed });
    }
    Ok(rows)
}

/// File names written by `synth`.
pub const SYNTH_CORPUS: &str = "corpus.csv";
pub const SYNTH_TRUTH: &str = "truth.json";
pub const SYNTH_TABLE: &str = "table.tsv";
pub const SYNTH_CONFIG: &str = "config.json";

impl SynthArgs {
    pub fn params(&self) -> SynthParams {
        let d = SynthParams::default();
        SynthParams {
            rate: self.rate.unwrap_or(d.rate),
            cohorts: self.cohorts.unwrap_or(d.cohorts),
            size: self.size.unwrap_or(d.size),
            length: self.length.unwrap_or(d.length),
            lineages: self.lineages.unwrap_or(d.lineages),
            embedding_dim: self.embedding_dim.unwrap_or(d.embedding_dim),
            seed: self.seed.unwrap_or(d.seed),
            ..d
        }
    }
}

/// Writes a synthetic corpus, its ground truth, a trigram table and a run
/// config pointing at them (output directory `run/`).
pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<synth::GroundTruth, CliError> {
    let params = args.params();
    let corpus = synth::generate(&params).map_err(CliError::Usage)?;
    let dir = &args.out;
    let write = |name: &str, bytes: &[u8]| -> Result<(), CliError> {
        let p = dir.join(name);
        fsutil::write_atomic(&p, bytes).map_err(io_err(&p))
    };
    let csv = synth::corpus_csv(&corpus.records).map_err(|e| CliError::Usage(format!("corpus.csv: {e}")))?;
    write(SYNTH_CORPUS, &csv)?;
    write(SYNTH_TABLE, corpus.table_tsv.as_bytes())?;
    let truth_path = dir.join(SYNTH_TRUTH);
    fsutil::write_json(&truth_path, &corpus.truth).map_err(io_err(&truth_path))?;

    let mut cfg = RunConfig::new(SYNTH_CORPUS.into(), "run".into(), corpus.truth.positions.clone());
    cfg.paths.embedding_table = Some(SYNTH_TABLE.into());
    cfg.embedding.dim = params.embedding_dim;
    cfg.embedding.allow_fallback = false;
    cfg.dataset.kmeans.k = params.lineages;
    cfg.validate()?;
    write(SYNTH_CONFIG, cfg.to_json()?.as_bytes())?;

    say(out, format_args!(
        "{} records, {} sites at risk, {} planted mutations -> {}",
        corpus.records.len(),
        corpus.truth.sites,
        corpus.truth.mutations.len(),
        dir.display()
    ));
    Ok(corpus.truth)
}
