use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use alsrec::evaluation::{evaluate, sweep, write_sweep_csv, EvalConfig, SweepGrid, Timing};
use alsrec::recommend::{self, recommend_all, Direction, RecommendationList};
use alsrec::synth::{self, PlantedBlocks};
use alsrec::{FactorModel, InteractionDataset, TrainConfig};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{Command, EvalArgs, Format, RecommendArgs, SynthArgs, TrainArgs};
use crate::manifest::{self, InputRecord, Manifest};

#[derive(Debug)]
pub enum Failure {
    /// Flag values that parse but do not fit together. Exit code 2.
    Usage(String),
    /// Anything that goes wrong while running. Exit code 1.
    Runtime(String),
}

impl From<alsrec::Error> for Failure {
    fn from(e: alsrec::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome<T> = Result<T, Failure>;

fn runtime(context: impl std::fmt::Display) -> impl FnOnce(io::Error) -> Failure {
    move |e| Failure::Runtime(format!("{context}: {e}"))
}

pub fn run(command: Command) -> Outcome<()> {
    let name = command.name();
    match command {
        Command::Train(a) => cmd_train(a),
        Command::Recommend(a) => cmd_recommend(a),
        Command::Evaluate(a) => cmd_eval(a, name, true),
        Command::Sweep(a) => cmd_eval(a, name, false),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn resolve_threads(threads: &mut Option<u64>) -> usize {
    let n = threads.unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, |n| n.get() as u64)
    });
    *threads = Some(n);
    n as usize
}

fn load_input(path: &Path) -> Outcome<(InteractionDataset, InputRecord)> {
    let bytes = fs::read(path).map_err(runtime(format!("reading {}", path.display())))?;
    let record = InputRecord::new(path, &bytes);
    let data = InteractionDataset::read_csv(bytes.as_slice())
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    log::info!(
        "{}: {} investors, {} companies, {} pairs",
        path.display(),
        data.num_investors(),
        data.num_companies(),
        data.num_pairs()
    );
    Ok((data, record))
}

fn pool(threads: usize) -> Outcome<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))
}

/// Opens `path`, or standard output when there is none.
fn open_output(path: Option<&Path>) -> Outcome<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).map_err(runtime(format!("creating {}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

struct Run {
    started_at: String,
    input: Option<InputRecord>,
    artifacts: Vec<PathBuf>,
    timings: Value,
}

impl Run {
    fn start() -> Self {
        Self {
            started_at: manifest::now(),
            input: None,
            artifacts: Vec::new(),
            timings: Value::Null,
        }
    }

    /// Writes to `explicit`, else beside the primary artifact, else stderr.
    fn finish<A: Serialize>(self, command: &str, args: &A, explicit: Option<&Path>) -> Outcome<()> {
        let config = serde_json::to_value(args).map_err(|e| Failure::Runtime(e.to_string()))?;
        let argv = manifest::to_argv(command, &config);
        let target = explicit
            .map(Path::to_path_buf)
            .or_else(|| self.artifacts.first().map(|p| manifest::sidecar(p)));
        let m = Manifest {
            command: command.to_owned(),
            config,
            argv,
            input: self.input,
            artifacts: self.artifacts,
            started_at: self.started_at,
            finished_at: manifest::now(),
            timings: self.timings,
        };
        m.write(target.as_deref()).map_err(runtime("writing manifest"))
    }
}

fn cmd_train(mut a: TrainArgs) -> Outcome<()> {
    let mut run = Run::start();
    let threads = resolve_threads(&mut a.threads);
    let (data, input) = load_input(&a.input)?;
    run.input = Some(input);
    let data = if a.transpose { data.transpose() } else { data };

    let cfg = TrainConfig {
        factors: a.factors as usize,
        iterations: a.iterations as usize,
        cg_steps: a.cg_steps as usize,
        lambda: a.lambda,
        seed: a.seed,
        threads,
        convergence_delta: a.convergence_delta,
    };
    let clock = Instant::now();
    let model = alsrec::train(&data, &cfg)?;
    let train_s = clock.elapsed().as_secs_f64();

    let mut bytes = Vec::new();
    model.write_to(&mut bytes)?;
    fs::write(&a.model_out, bytes).map_err(runtime(format!("writing {}", a.model_out.display())))?;
    log::info!("wrote {} ({} iterations, loss {:?})", a.model_out.display(), model.completed_iterations(), model.final_loss());

    run.artifacts.push(a.model_out.clone());
    run.timings = json!({
        "train_s": train_s,
        "completed_iterations": model.completed_iterations(),
        "loss_trace": model.loss_trace,
    });
    let explicit = a.manifest.clone();
    run.finish("train", &a, explicit.as_deref())
}

/// The input and transpose flag recorded when the model was trained.
fn training_input(model_path: &Path) -> Outcome<(PathBuf, bool, String)> {
    let path = manifest::sidecar(model_path);
    let text = fs::read_to_string(&path).map_err(|e| {
        Failure::Runtime(format!(
            "no --input given and the training manifest {} is unreadable ({e}); pass the training CSV with --input",
            path.display()
        ))
    })?;
    let m: Manifest = serde_json::from_str(&text)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    let input = m
        .input
        .ok_or_else(|| Failure::Runtime(format!("{} records no input", path.display())))?;
    let transpose = m.config.get("transpose").and_then(Value::as_bool).unwrap_or(false);
    Ok((input.path, transpose, input.sha256))
}

fn cmd_recommend(mut a: RecommendArgs) -> Outcome<()> {
    let mut run = Run::start();
    let threads = resolve_threads(&mut a.threads);
    let file = fs::File::open(&a.model).map_err(runtime(format!("opening {}", a.model.display())))?;
    let model = FactorModel::read_from(io::BufReader::new(file))
        .map_err(|e| Failure::Runtime(format!("{}: {e}", a.model.display())))?;

    let expected_digest = match &a.input {
        Some(_) => None,
        None => {
            let (path, transpose, digest) = training_input(&a.model)?;
            a.input = Some(path);
            a.transpose = transpose;
            Some(digest)
        }
    };
    let input_path = a.input.clone().expect("input resolved above");
    let (data, input) = load_input(&input_path)?;
    if let Some(digest) = expected_digest {
        if digest != input.sha256 {
            return Err(Failure::Runtime(format!(
                "{} changed since the model was trained (sha256 {} != {digest})",
                input_path.display(),
                input.sha256
            )));
        }
    }
    run.input = Some(input);
    let mask = if a.transpose { data.transpose() } else { data };
    if mask.companies().ids() != model.company_ids.ids() || mask.investors().ids() != model.investor_ids.ids() {
        return Err(Failure::Runtime(format!(
            "{} does not match the model's id tables{}",
            input_path.display(),
            if a.transpose { "" } else { " (was the model trained with --transpose?)" }
        )));
    }

    let (direction, entity_kind) = if a.transpose {
        (Direction::InvestorsForCompany, "company")
    } else {
        (Direction::CompaniesForInvestor, "investor")
    };
    let k = a.top_k as usize;
    let lists: Vec<RecommendationList> = match &a.entity {
        Some(id) => {
            let entity = model
                .investor_ids
                .index_of(id)
                .ok_or_else(|| Failure::Runtime(format!("unknown {entity_kind} id `{id}`")))?;
            let list = if a.transpose {
                recommend::top_k_transposed(&model, &mask, entity, k)?
            } else {
                recommend::top_k(&model, &mask, entity, k)?
            };
            vec![list]
        }
        None => pool(threads)?.install(|| recommend_all(&model, &mask, k, direction))?,
    };

    let mut out = open_output(a.output.as_deref())?;
    match a.format {
        Format::Jsonl => recommend::write_jsonl(&lists, &mut out)?,
        Format::Csv => recommend::write_csv(&lists, &mut out)?,
    }
    out.flush().map_err(runtime("writing recommendations"))?;
    drop(out);

    run.artifacts.extend(a.output.clone());
    let explicit = a.manifest.clone();
    run.finish("recommend", &a, explicit.as_deref())
}

fn cmd_eval(mut a: EvalArgs, command: &str, single: bool) -> Outcome<()> {
    if single && (a.factors.len() != 1 || a.iterations.len() != 1 || a.lambda.len() != 1) {
        return Err(Failure::Usage(
            "evaluate takes one value each for --factors, --iterations and --lambda; use sweep for grids".into(),
        ));
    }
    let mut run = Run::start();
    let threads = resolve_threads(&mut a.threads);
    let (data, input) = load_input(&a.input)?;
    run.input = Some(input);
    let data = if a.transpose { data.transpose() } else { data };
    if data.eligible_investors().is_empty() {
        return Err(alsrec::Error::NoEligibleInvestors.into());
    }

    let grid = SweepGrid {
        factors: a.factors.iter().map(|&f| f as usize).collect(),
        iterations: a.iterations.iter().map(|&i| i as usize).collect(),
        lambdas: a.lambda.clone(),
    };
    let cfg = EvalConfig {
        holdout_fraction: a.holdout,
        top_k: a.top_k as usize,
        trials: a.trials as usize,
        base_seed: a.seed,
        train: TrainConfig {
            cg_steps: a.cg_steps as usize,
            ..TrainConfig::default()
        },
        trial_threads: threads,
    };

    let rows = if single {
        let point = EvalConfig {
            train: TrainConfig {
                factors: grid.factors[0],
                iterations: grid.iterations[0],
                lambda: grid.lambdas[0],
                ..cfg.train.clone()
            },
            ..cfg.clone()
        };
        let eval = evaluate(&data, &point)?;
        run.timings = json!({
            "wall_time_s": eval.wall_time_s,
            "trials": eval.trials.iter().map(|t| json!({
                "trial": t.trial,
                "hidden_count": t.hidden_count,
                "correct_count": t.correct_count,
                "accuracy": t.accuracy,
                "final_train_loss": t.final_train_loss,
                "wall_time_s": t.wall_time_s,
            })).collect::<Vec<_>>(),
        });
        vec![alsrec::SweepResult {
            factors: grid.factors[0],
            iterations: grid.iterations[0],
            lambda: grid.lambdas[0],
            trials: eval.trials.len(),
            accuracy_mean: eval.accuracy_mean,
            accuracy_std: eval.accuracy_std,
            loss_final_mean: eval.loss_final_mean,
            wall_time_s: eval.wall_time_s,
        }]
    } else {
        let rows = sweep(&data, &grid, &cfg)?;
        run.timings = json!({
            "points": rows.iter().map(|r| json!({
                "factors": r.factors,
                "iterations": r.iterations,
                "lambda": r.lambda,
                "wall_time_s": r.wall_time_s,
            })).collect::<Vec<_>>(),
        });
        rows
    };

    let timing = if a.record_timing { Timing::Record } else { Timing::Omit };
    let mut out = open_output(a.output.as_deref())?;
    write_sweep_csv(&rows, &mut out, timing)?;
    out.flush().map_err(runtime("writing results"))?;
    drop(out);

    run.artifacts.extend(a.output.clone());
    let explicit = a.manifest.clone();
    run.finish(command, &a, explicit.as_deref())
}

fn cmd_synth(a: SynthArgs) -> Outcome<()> {
    let limit = a.investors.min(a.companies);
    if a.blocks > limit {
        return Err(Failure::Usage(format!(
            "--blocks {} exceeds min(--investors, --companies) = {limit}",
            a.blocks
        )));
    }
    let mut run = Run::start();
    let g = PlantedBlocks {
        investors: a.investors as usize,
        companies: a.companies as usize,
        blocks: a.blocks as usize,
        density: a.density,
        noise: a.noise,
        seed: a.seed,
    };
    let clock = Instant::now();
    let records = g.generate()?;
    let mut out = open_output(a.output.as_deref())?;
    synth::write_records(&records, &mut out)?;
    out.flush().map_err(runtime("writing records"))?;
    drop(out);

    let (mean, var) = g.pair_count_moments();
    run.artifacts.extend(a.output.clone());
    run.timings = json!({
        "generate_s": clock.elapsed().as_secs_f64(),
        "pairs": records.len(),
        "expected_pairs": mean,
        "pairs_std": var.sqrt(),
    });
    let explicit = a.manifest.clone();
    run.finish("synth", &a, explicit.as_deref())
}
