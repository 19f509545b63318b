//! Hold-one-out hit-rate evaluation and hyperparameter sweeps.
//!
//! A trial hides one interaction from each of a random sample of investors
//! that have at least two, retrains from scratch on the rest, and counts a hit
//! when the hidden company is among the investor's top-k unseen companies.
//! Accuracy is hits over hidden pairs; an evaluation averages many trials.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::dataset::{HoldoutSplit, InteractionDataset};
use crate::error::{Error, Result};
use crate::factorization::{train, FactorModel, TrainConfig};
use crate::recommend::{top_k_indices, DEFAULT_TOP_K};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub holdout_fraction: f64,
    pub top_k: usize,
    pub trials: usize,
    pub base_seed: u64,
    pub train: TrainConfig,
    /// Trials run concurrently on this many threads; 0 uses the ambient pool.
    pub trial_threads: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            holdout_fraction: 0.10,
            top_k: DEFAULT_TOP_K,
            trials: 50,
            base_seed: 0,
            train: TrainConfig::default(),
            trial_threads: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "holdout fraction must be in (0, 1], got {}",
                self.holdout_fraction
            )));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidConfig("top-k must be >= 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        self.train.validate()
    }
}

/// Stream tags for [`derive_seed`].
pub const SPLIT_STREAM: u64 = 0;
pub const INIT_STREAM: u64 = 1;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit seed for `(base, trial, stream)`.
pub fn derive_seed(base: u64, trial: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ trial) ^ stream)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub hidden_count: usize,
    pub correct_count: usize,
    pub accuracy: f64,
    pub final_train_loss: f64,
    pub wall_time_s: f64,
}

/// Everything a trial produced, for audits of the protocol.
#[derive(Debug, Clone)]
pub struct TrialDetails {
    pub split: HoldoutSplit,
    pub model: FactorModel,
    /// Parallel to `split.hidden`.
    pub hits: Vec<bool>,
}

pub fn run_trial(data: &InteractionDataset, cfg: &EvalConfig, trial: usize) -> Result<TrialResult> {
    run_trial_detailed(data, cfg, trial).map(|(result, _)| result)
}

pub fn run_trial_detailed(
    data: &InteractionDataset,
    cfg: &EvalConfig,
    trial: usize,
) -> Result<(TrialResult, TrialDetails)> {
    cfg.validate()?;
    let start = Instant::now();
    let split = data.holdout_split(
        cfg.holdout_fraction,
        derive_seed(cfg.base_seed, trial as u64, SPLIT_STREAM),
    )?;
    for &(investor, company) in &split.hidden {
        assert!(
            !split.train.contains(company, investor),
            "hidden pair ({investor}, {company}) leaked into training data"
        );
    }

    let train_cfg = TrainConfig {
        seed: derive_seed(cfg.base_seed, trial as u64, INIT_STREAM),
        ..cfg.train.clone()
    };
    let model = train(&split.train, &train_cfg)?;

    let hits = split
        .hidden
        .par_iter()
        .map(|&(investor, company)| {
            let ranked = top_k_indices(&model, &split.train, investor, cfg.top_k)?;
            Ok(ranked.iter().any(|&(c, _)| c == company))
        })
        .collect::<Result<Vec<bool>>>()?;

    let hidden_count = hits.len();
    let correct_count = hits.iter().filter(|&&h| h).count();
    let result = TrialResult {
        trial,
        hidden_count,
        correct_count,
        accuracy: accuracy(correct_count, hidden_count),
        final_train_loss: model.final_loss().unwrap_or(f64::NAN),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((result, TrialDetails { split, model, hits }))
}

/// Correct predictions over hidden pairs.
pub fn accuracy(correct: usize, hidden: usize) -> f64 {
    if hidden == 0 {
        return 0.0;
    }
    correct as f64 / hidden as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// In trial-index order.
    pub trials: Vec<TrialResult>,
    pub accuracy_mean: f64,
    /// Sample standard deviation; 0 for a single trial.
    pub accuracy_std: f64,
    pub loss_final_mean: f64,
    pub wall_time_s: f64,
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn evaluate(data: &InteractionDataset, cfg: &EvalConfig) -> Result<Evaluation> {
    cfg.validate()?;
    let start = Instant::now();
    let run = || -> Result<Vec<TrialResult>> {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                run_trial(data, cfg, t).map_err(|e| Error::Trial {
                    trial: t,
                    source: Box::new(e),
                })
            })
            .collect()
    };
    let trials = if cfg.trial_threads == 0 {
        run()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.trial_threads)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(run)?
    };

    let accuracies: Vec<f64> = trials.iter().map(|t| t.accuracy).collect();
    let losses: Vec<f64> = trials.iter().map(|t| t.final_train_loss).collect();
    let (accuracy_mean, accuracy_std) = mean_and_std(&accuracies);
    let (loss_final_mean, _) = mean_and_std(&losses);
    Ok(Evaluation {
        trials,
        accuracy_mean,
        accuracy_std,
        loss_final_mean,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Cartesian grid, enumerated factors-major, then iterations, then λ.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub factors: Vec<usize>,
    pub iterations: Vec<usize>,
    pub lambdas: Vec<f64>,
}

impl SweepGrid {
    pub fn points(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.factors.iter().flat_map(move |&f| {
            self.iterations
                .iter()
                .flat_map(move |&it| self.lambdas.iter().map(move |&l| (f, it, l)))
        })
    }

    pub fn len(&self) -> usize {
        self.factors.len() * self.iterations.len() * self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub factors: usize,
    pub iterations: usize,
    pub lambda: f64,
    pub trials: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub loss_final_mean: f64,
    pub wall_time_s: f64,
}

pub fn sweep(
    data: &InteractionDataset,
    grid: &SweepGrid,
    cfg: &EvalConfig,
) -> Result<Vec<SweepResult>> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("sweep grid is empty".into()));
    }
    grid.points()
        .map(|(factors, iterations, lambda)| {
            let point_cfg = EvalConfig {
                train: TrainConfig {
                    factors,
                    iterations,
                    lambda,
                    ..cfg.train.clone()
                },
                ..cfg.clone()
            };
            log::info!("sweep point factors={factors} iterations={iterations} lambda={lambda}");
            let eval = evaluate(data, &point_cfg).map_err(|e| Error::GridPoint {
                factors,
                iterations,
                lambda,
                source: Box::new(e),
            })?;
            Ok(SweepResult {
                factors,
                iterations,
                lambda,
                trials: eval.trials.len(),
                accuracy_mean: eval.accuracy_mean,
                accuracy_std: eval.accuracy_std,
                loss_final_mean: eval.loss_final_mean,
                wall_time_s: eval.wall_time_s,
            })
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: [&str; 8] = [
    "factors",
    "iterations",
    "lambda",
    "trials",
    "accuracy_mean",
    "accuracy_std",
    "loss_final_mean",
    "wall_time_s",
];

/// Whether the `wall_time_s` column is filled in. Left empty, the CSV is a
/// pure function of data, grid and seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timing {
    Record,
    Omit,
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepResult], w: W, timing: Timing) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SWEEP_CSV_HEADER)?;
    for r in rows {
        let wall = match timing {
            Timing::Record => format!("{:.3}", r.wall_time_s),
            Timing::Omit => String::new(),
        };
        wtr.write_record([
            r.factors.to_string(),
            r.iterations.to_string(),
            r.lambda.to_string(),
            r.trials.to_string(),
            r.accuracy_mean.to_string(),
            r.accuracy_std.to_string(),
            r.loss_final_mean.to_string(),
            wall,
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
