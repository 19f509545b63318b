use std::path::PathBuf;

use clap::{value_parser, ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "alsrec", version, about = "Latent-factor recommendations for investor/company data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a factor model and write it to a model file.
    Train(TrainArgs),
    /// Top-k unseen items for one entity or for all of them.
    Recommend(RecommendArgs),
    /// Holdout evaluation of a single configuration.
    Evaluate(EvalArgs),
    /// Holdout evaluation over a grid of configurations.
    Sweep(EvalArgs),
    /// Generate a planted-block interaction CSV.
    Synth(SynthArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Recommend(_) => "recommend",
            Command::Evaluate(_) => "evaluate",
            Command::Sweep(_) => "sweep",
            Command::Synth(_) => "synth",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Interaction CSV (`investor_id,company_id[,count]`).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub model_out: PathBuf,
    #[arg(long, default_value_t = 10, value_parser = value_parser!(u64).range(1..))]
    pub factors: u64,
    #[arg(long, default_value_t = 2, value_parser = value_parser!(u64).range(1..))]
    pub iterations: u64,
    #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
    pub lambda: f64,
    /// Conjugate-gradient steps per row per half-update.
    #[arg(long, default_value_t = 3, value_parser = value_parser!(u64).range(1..))]
    pub cg_steps: u64,
    /// Stop early once no factor entry moves by more than this.
    #[arg(long, value_parser = positive)]
    pub convergence_delta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train on the transposed matrix (company-to-investor model).
    #[arg(long)]
    pub transpose: bool,
    #[arg(long, env = "ALSREC_THREADS", value_parser = value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
    /// Defaults to `<model-out>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("target").required(true).args(["entity", "all"])))]
pub struct RecommendArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Training CSV used as the mask. Defaults to the input recorded in
    /// `<model>.manifest.json`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// The model was trained with `--transpose`.
    #[arg(long)]
    pub transpose: bool,
    #[arg(long)]
    pub entity: Option<String>,
    #[arg(long)]
    pub all: bool,
    #[arg(long, default_value_t = 10, value_parser = value_parser!(u64).range(1..))]
    pub top_k: u64,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
    /// Defaults to standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, env = "ALSREC_THREADS", value_parser = value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Comma-separated list.
    #[arg(long, value_delimiter = ',', default_value = "10", value_parser = value_parser!(u64).range(1..))]
    pub factors: Vec<u64>,
    /// Comma-separated list.
    #[arg(long, value_delimiter = ',', default_value = "2", value_parser = value_parser!(u64).range(1..))]
    pub iterations: Vec<u64>,
    /// Comma-separated list.
    #[arg(long, value_delimiter = ',', default_value = "0", value_parser = non_negative)]
    pub lambda: Vec<f64>,
    #[arg(long, default_value_t = 3, value_parser = value_parser!(u64).range(1..))]
    pub cg_steps: u64,
    #[arg(long, default_value_t = 50, value_parser = value_parser!(u64).range(1..))]
    pub trials: u64,
    /// Fraction of eligible investors with one company hidden per trial.
    #[arg(long, default_value_t = 0.10, value_parser = fraction)]
    pub holdout: f64,
    #[arg(long, default_value_t = 10, value_parser = value_parser!(u64).range(1..))]
    pub top_k: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Evaluate investors-for-company recommendations instead.
    #[arg(long)]
    pub transpose: bool,
    /// Fill the `wall_time_s` column. Off by default so reruns are
    /// byte-identical; timings always go to the manifest.
    #[arg(long)]
    pub record_timing: bool,
    /// Defaults to standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, env = "ALSREC_THREADS", value_parser = value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_parser = value_parser!(u64).range(1..))]
    pub investors: u64,
    #[arg(long, value_parser = value_parser!(u64).range(1..))]
    pub companies: u64,
    #[arg(long, default_value_t = 1, value_parser = value_parser!(u64).range(1..))]
    pub blocks: u64,
    /// Within-block pair probability.
    #[arg(long, value_parser = probability)]
    pub density: f64,
    /// Cross-block pair probability.
    #[arg(long, default_value_t = 0.0, value_parser = probability)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(v)
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v < 0.0 {
        return Err(format!("{v} is negative"));
    }
    Ok(v)
}

fn positive(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v <= 0.0 {
        return Err(format!("{v} is not positive"));
    }
    Ok(v)
}

fn fraction(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if !(v > 0.0 && v <= 1.0) {
        return Err(format!("{v} is not in (0, 1]"));
    }
    Ok(v)
}

fn probability(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("{v} is not in [0, 1]"));
    }
    Ok(v)
}
