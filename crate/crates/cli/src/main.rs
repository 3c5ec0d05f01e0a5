//! `ape`: generate data, train models, explain predictions, run experiments.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use ape_core::ape::{explain, ApeConfig, Fallback};
use ape_core::evalharness::{
    run_ablation, run_adherence_experiment, run_cf_quality, run_glassbox_fidelity, AblationConfig, AdherenceConfig,
    CfQualityConfig, ExperimentReport, GlassboxConfig, PoolKind,
};
use ape_core::models::{accuracy, train_model, Model, ModelConfig, ModelKind};
use ape_core::tabular::{load_dataset, synthesize_dataset, train_test_split, Dataset, SyntheticKind};
use ape_core::Classifier;

#[derive(Parser, Debug)]
#[command(name = "ape", version, about = "Adapted post-hoc explanations for tabular classifiers")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// JSON file with default values for any flag (flags win).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic labelled dataset as CSV.
    Gen(GenArgs),
    /// Train a model on a labelled CSV and save it as JSON.
    Train(TrainArgs),
    /// Explain one prediction.
    Explain(ExplainArgs),
    /// Run an experiment and write its report.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    kind: Option<SyntheticKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Name of the label column.
    #[arg(long)]
    label: Option<String>,
    /// tree, forest or lr.
    #[arg(long = "model")]
    model_kind: Option<ModelKind>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExplainArgs {
    /// CSV with the reference data.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Synthesize the reference data instead of reading it.
    #[arg(long)]
    synthetic: Option<SyntheticKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    /// Label column to drop from the CSV, if present.
    #[arg(long)]
    label: Option<String>,
    /// Saved model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Train a model of this kind on the reference data instead.
    #[arg(long)]
    train: Option<ModelKind>,
    /// Row of the data to explain (0-based).
    #[arg(long)]
    row: Option<usize>,
    /// Comma-separated feature values to explain.
    #[arg(long, allow_hyphen_values = true)]
    instance: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    fallback: Option<Fallback>,
    /// Precision threshold of rules.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    si_threshold: Option<f64>,
    #[arg(long)]
    folding_threshold: Option<f64>,
    /// Print the text rendering to stdout.
    #[arg(long)]
    text: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum Experiment {
    Adherence,
    Glassbox,
    Cf,
    Ablation,
}

#[derive(ValueEnum, Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum Pool {
    Mixed,
    Synthetic,
}

#[derive(Args, Debug)]
struct EvalArgs {
    experiment: Option<Experiment>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    targets: Option<usize>,
    #[arg(long)]
    pool: Option<Pool>,
    #[arg(long)]
    format: Option<Format>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// Defaults read from `--config`; keys mirror the long flag names.
#[derive(Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    jobs: Option<usize>,
    kind: Option<String>,
    n: Option<usize>,
    noise: Option<f64>,
    seed: Option<u64>,
    output: Option<PathBuf>,
    data: Option<PathBuf>,
    synthetic: Option<String>,
    label: Option<String>,
    model: Option<serde_json::Value>,
    train: Option<String>,
    max_depth: Option<usize>,
    trees: Option<usize>,
    row: Option<usize>,
    instance: Option<String>,
    fallback: Option<Fallback>,
    tau: Option<f64>,
    si_threshold: Option<f64>,
    folding_threshold: Option<f64>,
    experiment: Option<Experiment>,
    targets: Option<usize>,
    pool: Option<Pool>,
    format: Option<Format>,
}

fn parse_kind<T: std::str::FromStr<Err = ape_core::Error>>(s: &Option<String>) -> anyhow::Result<Option<T>> {
    s.as_deref().map(str::parse::<T>).transpose().map_err(|e| anyhow!(e))
}

/// Error raised for inconsistent or missing arguments (exit code 1).
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(Usage(msg.into()).into())
}

fn write_output(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn default_noise(kind: SyntheticKind) -> f64 {
    match kind {
        SyntheticKind::Moons => 0.1,
        SyntheticKind::Circles => 0.05,
        SyntheticKind::Blobs => 1.0,
    }
}

fn gen(a: GenArgs, c: &FileConfig) -> anyhow::Result<()> {
    let Some(kind) = a.kind.or(parse_kind(&c.kind)?) else { return usage("gen needs --kind") };
    let n = a.n.or(c.n).unwrap_or(1000);
    let noise = a.noise.or(c.noise).unwrap_or_else(|| default_noise(kind));
    let ds = synthesize_dataset(kind, n, noise, a.seed.or(c.seed).unwrap_or(0))?;
    let mut buf = Vec::new();
    ds.write_csv(&mut buf)?;
    write_output(a.output.or(c.output.clone()).as_deref(), &String::from_utf8(buf)?)
}

fn model_config(kind: ModelKind, max_depth: Option<usize>, trees: Option<usize>) -> ModelConfig {
    let mut cfg = ModelConfig::new(kind);
    if max_depth.is_some() {
        cfg.max_depth = max_depth;
    }
    if let Some(t) = trees {
        cfg.n_trees = t;
    }
    cfg
}

fn train(a: TrainArgs, c: &FileConfig) -> anyhow::Result<()> {
    let Some(data) = a.data.or(c.data.clone()) else { return usage("train needs --data") };
    let label = a.label.or(c.label.clone()).unwrap_or_else(|| "label".into());
    let kind = match a.model_kind {
        Some(k) => k,
        None => match c.model.as_ref().and_then(|v| v.as_str()) {
            Some(s) => s.parse()?,
            None => return usage("train needs --model tree|forest|lr"),
        },
    };
    let seed = a.seed.or(c.seed).unwrap_or(0);
    let ds = load_dataset(&data, None, Some(&label))?;
    let labels = ds.labels.clone().ok_or_else(|| anyhow!("no label column `{label}`"))?;
    let (tr, te) = train_test_split(ds.n_rows(), 0.7, seed);
    let cfg = model_config(kind, a.max_depth.or(c.max_depth), a.trees.or(c.trees));
    let model = train_model(&ds.subset(&tr)?, &cfg, seed)?;
    let rows: Vec<_> = te.iter().map(|&i| ds.rows[i].clone()).collect();
    let ys: Vec<usize> = te.iter().map(|&i| labels[i]).collect();
    let acc = accuracy(&model, &rows, &ys)?;
    let out = a.output.or(c.output.clone());
    write_output(out.as_deref(), &(model.to_json()? + "\n"))?;
    let line = format!("accuracy: {acc:.4} ({} held-out rows)", ys.len());
    if out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
    Ok(())
}

fn explain_cmd(a: ExplainArgs, c: &FileConfig) -> anyhow::Result<()> {
    let model_path = a.model.clone().or_else(|| c.model.as_ref().and_then(|v| v.as_str()).map(PathBuf::from));
    let train_kind = a.train.or(parse_kind(&c.train)?);
    if model_path.is_some() == train_kind.is_some() {
        return usage("give exactly one of --model and --train");
    }
    let data = a.data.clone().or(c.data.clone());
    let synthetic = a.synthetic.or(parse_kind(&c.synthetic)?);
    if data.is_some() == synthetic.is_some() {
        return usage("give exactly one of --data and --synthetic");
    }
    let row = a.row.or(c.row);
    let instance = a.instance.clone().or(c.instance.clone());
    if row.is_some() == instance.is_some() {
        return usage("give exactly one of --row and --instance");
    }
    let seed = a.seed.or(c.seed).unwrap_or(0);
    let label = a.label.clone().or(c.label.clone());

    let loaded = match &model_path {
        Some(p) => Some(Model::from_json(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?),
        None => None,
    };
    let ds: Dataset = match (&data, synthetic) {
        (Some(p), _) => {
            let schema = loaded.as_ref().map(|m| m.specs.as_slice());
            let header = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let first = header.lines().next().unwrap_or("");
            let lab = label.clone().or_else(|| first.split(',').any(|h| h.trim() == "label").then(|| "label".to_string()));
            load_dataset(p, schema, lab.as_deref())?
        }
        (None, Some(kind)) => {
            let n = a.n.or(c.n).unwrap_or(1000);
            synthesize_dataset(kind, n, a.noise.or(c.noise).unwrap_or_else(|| default_noise(kind)), seed)?
        }
        _ => unreachable!(),
    };
    let mut ds = ds;
    let model = match (loaded, train_kind) {
        (Some(m), _) => m,
        (None, Some(k)) => train_model(&ds, &model_config(k, c.max_depth, c.trees), seed)?,
        _ => unreachable!(),
    };
    if ds.class_names.len() != model.n_classes() {
        ds.class_names = model.class_names.clone();
    }
    let target = match (row, instance) {
        (Some(r), _) => ds.rows.get(r).cloned().ok_or_else(|| anyhow!("row {r} out of range ({} rows)", ds.n_rows()))?,
        (None, Some(s)) => parse_instance(&ds, &s)?,
        _ => unreachable!(),
    };
    let mut cfg = ApeConfig::default();
    if let Some(f) = a.fallback.or(c.fallback) {
        cfg.fallback = f;
    }
    if let Some(t) = a.tau.or(c.tau) {
        cfg.anchor.tau = t;
    }
    if let Some(t) = a.si_threshold.or(c.si_threshold) {
        cfg.oracle.si_threshold = t;
    }
    if let Some(t) = a.folding_threshold.or(c.folding_threshold) {
        cfg.oracle.folding_threshold = t;
    }
    let e = explain(&ds, &model, &target, &cfg, seed)?;
    let out = a.output.or(c.output.clone());
    if out.is_some() || !a.text {
        write_output(out.as_deref(), &(e.to_json()? + "\n"))?;
    }
    if a.text {
        for line in &e.rendering {
            println!("{line}");
        }
    }
    eprintln!("explained in {:.3}s", e.timings.total.as_secs_f64());
    Ok(())
}

fn parse_instance(ds: &Dataset, s: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != ds.n_features() {
        bail!("instance has {} values, schema has {}", parts.len(), ds.n_features());
    }
    parts
        .iter()
        .zip(&ds.specs)
        .map(|(p, spec)| {
            if spec.is_categorical() {
                spec.categories
                    .iter()
                    .position(|c| c == p)
                    .map(|i| i as f64)
                    .ok_or_else(|| anyhow!("unknown category `{p}` for {}", spec.name))
            } else {
                p.parse::<f64>().map_err(|_| anyhow!("`{p}` is not a number"))
            }
        })
        .collect()
}

fn eval(a: EvalArgs, c: &FileConfig) -> anyhow::Result<()> {
    let Some(exp) = a.experiment.or(c.experiment) else { return usage("eval needs an experiment: adherence|glassbox|cf|ablation") };
    let seed = a.seed.or(c.seed).unwrap_or(0);
    let targets = a.targets.or(c.targets);
    let pool = match a.pool.or(c.pool).unwrap_or(Pool::Mixed) {
        Pool::Mixed => PoolKind::Mixed,
        Pool::Synthetic => PoolKind::Synthetic,
    };
    let rep: ExperimentReport = match exp {
        Experiment::Adherence => {
            let d = AdherenceConfig::default();
            run_adherence_experiment(&AdherenceConfig { n_targets: targets.unwrap_or(d.n_targets), pool, ..d }, seed)?
        }
        Experiment::Glassbox => {
            let d = GlassboxConfig::default();
            run_glassbox_fidelity(&GlassboxConfig { n_targets: targets.unwrap_or(d.n_targets), ..d }, seed)?
        }
        Experiment::Cf => {
            let d = CfQualityConfig::default();
            run_cf_quality(&CfQualityConfig { n_targets: targets.unwrap_or(d.n_targets), ..d }, seed)?
        }
        Experiment::Ablation => {
            let d = AblationConfig::default();
            run_ablation(&AblationConfig { n_targets: targets.unwrap_or(d.n_targets), pool, ..d }, seed)?
        }
    };
    let text = match a.format.or(c.format).unwrap_or(Format::Json) {
        Format::Json => rep.to_json()? + "\n",
        Format::Csv => rep.to_csv()?,
    };
    write_output(a.output.or(c.output.clone()).as_deref(), &text)?;
    for (k, v) in &rep.wall_times {
        eprintln!("wall time {k}: median {:.4}s over {}", rep.median_wall_time(k).unwrap_or(0.0), v.len());
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg: FileConfig = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| Usage(format!("bad config {}: {e}", p.display())))?
        }
        None => FileConfig::default(),
    };
    if let Some(j) = cli.jobs.or(cfg.jobs) {
        if j == 0 {
            return usage("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    match cli.command {
        Command::Gen(a) => gen(a, &cfg),
        Command::Train(a) => train(a, &cfg),
        Command::Explain(a) => explain_cmd(a, &cfg),
        Command::Eval(a) => eval(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}");
            eprintln!("run `ape --help` for usage");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
