//! Acceptance criteria, one line of output each.
//!
//! Runs as a plain binary (`harness = false`) so that every criterion is
//! reported even when an earlier one fails. Criterion 8 needs the 2013
//! Crunchbase investments converted to `investor_id,company_id[,count]` CSV;
//! point `ALSREC_CRUNCHBASE_CSV` at it to enable that check.

mod common;

use std::collections::HashSet;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use alsrec::evaluation::{evaluate, run_trial_detailed, sweep, write_sweep_csv, EvalConfig, SweepGrid, Timing};
use alsrec::factorization::{half_update, init_factors, train, TrainConfig};
use alsrec::linalg::{cg_solve, loss, SpdSystem};
use alsrec::recommend::DEFAULT_TOP_K;
use alsrec::InteractionDataset;
use common::*;
use rand::Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Result<String, String>) -> Outcome {
    let start = Instant::now();
    let result = panic::catch_unwind(AssertUnwindSafe(f));
    let elapsed = start.elapsed();
    match result {
        Ok(Ok(detail)) => match limit {
            Some(lim) if elapsed > lim => Outcome::Fail(format!(
                "{detail}; runtime {:.2}s exceeds {:.0}s",
                elapsed.as_secs_f64(),
                lim.as_secs_f64()
            )),
            _ => Outcome::Pass(format!("{detail} ({:.2}s)", elapsed.as_secs_f64())),
        },
        Ok(Err(msg)) => Outcome::Fail(msg),
        Err(p) => Outcome::Fail(
            p.downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()),
        ),
    }
}

fn ac1_cg_correctness() -> Outcome {
    timed(Some(Duration::from_secs(5)), || {
        let mut rng = rng(1001);
        let mut worst = 0.0f64;
        for case in 0..200 {
            let n = 1 + case % 16;
            let a = random_spd(&mut rng, n);
            let b = random_vec(&mut rng, n);
            let x0 = random_vec(&mut rng, n);
            let shift = if case % 2 == 0 { 0.0 } else { rng.random_range(0.0..1.0) };
            let sys = SpdSystem::new(&a, shift).map_err(|e| e.to_string())?;

            let x = cg_solve(&sys, &b, &x0, n).map_err(|e| e.to_string())?;
            let err = rel_err(&x, &direct_solve(&a, shift, &b));
            worst = worst.max(err);
            check(err <= 1e-8, format!("case {case} (f={n}): relative error {err:e}"))?;

            let mut prev = quadratic(&a, shift, &b, &x0);
            for steps in 1..=3 {
                let x = cg_solve(&sys, &b, &x0, steps).map_err(|e| e.to_string())?;
                let obj = quadratic(&a, shift, &b, &x);
                check(
                    obj <= prev + 1e-12 * prev.abs().max(1.0),
                    format!("case {case}: objective rose at step {steps}: {prev} -> {obj}"),
                )?;
                prev = obj;
            }
        }
        Ok(format!("200 systems, worst relative error {worst:.1e}"))
    })
}

fn ac2_loss_identity() -> Outcome {
    timed(Some(Duration::from_secs(10)), || {
        let mut rng = rng(2002);
        let mut worst = 0.0f64;
        for case in 0..100 {
            let companies = rng.random_range(1..=100);
            let investors = rng.random_range(1..=100);
            let f = rng.random_range(1..=8);
            let density = rng.random_range(0.01..0.3);
            let lambda = rng.random_range(0.0..3.0);
            let d = random_dataset(&mut rng, companies, investors, density);
            let x = random_matrix(&mut rng, companies, f, -1.0, 1.0);
            let y = random_matrix(&mut rng, investors, f, -1.0, 1.0);
            let want = brute_force_loss(&d, &x, &y, lambda);
            let got = loss(&d, &x, &y, lambda).map_err(|e| e.to_string())?;
            let rel = (got - want).abs() / want.abs();
            worst = worst.max(rel);
            check(rel <= 1e-10, format!("case {case}: {got} vs brute force {want}"))?;
        }
        Ok(format!("100 instances, worst relative error {worst:.1e}"))
    })
}

fn ac3_half_update_ordering() -> Outcome {
    timed(None, || {
        let mut rng = rng(3003);
        for case in 0..50 {
            let companies = rng.random_range(4..=20);
            let investors = rng.random_range(4..=20);
            // f > 3 so three CG steps are genuinely inexact
            let f = rng.random_range(4..=8);
            let lambda = rng.random_range(0.01..1.0);
            let d = random_dataset(&mut rng, companies, investors, 0.25);
            let cfg = TrainConfig {
                factors: f,
                lambda,
                seed: case,
                ..TrainConfig::default()
            };
            let (x, y) = init_factors(companies, investors, &cfg).map_err(|e| e.to_string())?;
            let before = loss(&d, &x, &y, lambda).map_err(|e| e.to_string())?;
            let mut cg_y = y.clone();
            half_update(&mut cg_y, &x, d.by_investor(), lambda, 3).map_err(|e| e.to_string())?;
            let exact_y = exact_half_update(&y, &x, d.by_investor(), lambda);
            let after_cg = loss(&d, &x, &cg_y, lambda).map_err(|e| e.to_string())?;
            let after_exact = loss(&d, &x, &exact_y, lambda).map_err(|e| e.to_string())?;
            let tol = 1e-12 * before.abs();
            check(
                after_exact <= after_cg + tol && after_cg <= before + tol,
                format!("case {case}: exact {after_exact}, cg {after_cg}, before {before}"),
            )?;
        }
        Ok("50 instances ordered exact <= cg <= before".into())
    })
}

fn ac4_monotone_descent() -> Outcome {
    timed(None, || {
        let mut rng = rng(4004);
        for case in 0..20 {
            let companies = rng.random_range(5..=40);
            let investors = rng.random_range(5..=40);
            let f = rng.random_range(1..=6);
            let d = random_dataset(&mut rng, companies, investors, 0.15);
            let cfg = TrainConfig {
                factors: f,
                iterations: 10,
                cg_steps: f + rng.random_range(0..3),
                lambda: if case % 2 == 0 { 0.0 } else { rng.random_range(0.0..2.0) },
                seed: case,
                ..TrainConfig::default()
            };
            let model = train(&d, &cfg).map_err(|e| e.to_string())?;
            check(model.loss_trace.len() == 11, "trace length".into())?;
            for (k, w) in model.loss_trace.windows(2).enumerate() {
                check(
                    w[1] <= w[0] + 1e-12 * w[0].abs(),
                    format!("case {case}: loss rose at iteration {}: {} -> {}", k + 1, w[0], w[1]),
                )?;
            }
        }
        Ok("20 instances, 10 iterations each, non-increasing".into())
    })
}

fn ac5_protocol_integrity() -> Outcome {
    timed(None, || {
        let d = sparse_noisy_blocks();
        let cfg = EvalConfig {
            trials: 50,
            base_seed: 5005,
            train: TrainConfig {
                factors: 8,
                iterations: 2,
                lambda: 0.1,
                ..TrainConfig::default()
            },
            ..EvalConfig::default()
        };
        let eligible = d.eligible_investors().len();
        let expected_hidden = (0.10 * eligible as f64).round() as usize;
        for t in 0..50 {
            let (r, details) = run_trial_detailed(&d, &cfg, t).map_err(|e| e.to_string())?;
            let train_pairs: HashSet<(u32, u32)> = details.split.train.pairs().iter().copied().collect();
            for &(i, c) in &details.split.hidden {
                check(
                    !train_pairs.contains(&(c as u32, i as u32)),
                    format!("trial {t}: hidden ({i},{c}) in training data"),
                )?;
            }
            check(
                r.hidden_count == expected_hidden,
                format!("trial {t}: {} hidden, expected {expected_hidden}", r.hidden_count),
            )?;
            let recount = details
                .split
                .hidden
                .iter()
                .filter(|&&(i, c)| {
                    full_sort_top_k(&details.model.companies, &details.model.investors, &details.split.train, i, cfg.top_k)
                        .iter()
                        .any(|&(r, _)| r == c)
                })
                .count();
            check(
                recount == r.correct_count && r.accuracy == recount as f64 / expected_hidden as f64,
                format!("trial {t}: accuracy {} but brute-force recount {recount}/{expected_hidden}", r.accuracy),
            )?;
        }
        Ok(format!("50 trials, {expected_hidden} hidden each, disjoint, recount agrees"))
    })
}

/// Frozen from 50-trial runs over ten generator seeds (per-seed means
/// 0.905..0.98, 4 hidden pairs per trial).
const PLANTED_ACCURACY_THRESHOLD: f64 = 0.85;

fn planted_eval() -> (InteractionDataset, alsrec::Evaluation) {
    let d = planted_two_block(2024);
    let cfg = EvalConfig {
        trials: 50,
        top_k: 10,
        base_seed: 6006,
        train: TrainConfig {
            factors: 8,
            iterations: 2,
            lambda: 0.1,
            ..TrainConfig::default()
        },
        ..EvalConfig::default()
    };
    let e = evaluate(&d, &cfg).expect("planted evaluation");
    (d, e)
}

fn ac6_planted_recovery() -> Outcome {
    timed(Some(Duration::from_secs(60)), || {
        let (_, e) = planted_eval();
        check(
            e.accuracy_mean >= PLANTED_ACCURACY_THRESHOLD,
            format!("mean accuracy {:.4} < {PLANTED_ACCURACY_THRESHOLD}", e.accuracy_mean),
        )?;
        Ok(format!(
            "mean accuracy {:.4} ± {:.4} >= {PLANTED_ACCURACY_THRESHOLD}",
            e.accuracy_mean, e.accuracy_std
        ))
    })
}

fn ac6_baseline_ratio() -> Outcome {
    timed(None, || {
        let (d, e) = planted_eval();
        let baseline = DEFAULT_TOP_K as f64 / d.num_companies() as f64;
        let ratio = e.accuracy_mean / baseline;
        check(
            ratio >= 5.0,
            format!(
                "accuracy {:.4} is {ratio:.2}x the k/C baseline {baseline:.3}; 5x would need accuracy {:.2} > 1",
                e.accuracy_mean,
                5.0 * baseline
            ),
        )?;
        Ok(format!("{ratio:.2}x the k/C baseline"))
    })
}

fn ac7_determinism() -> Outcome {
    timed(None, || {
        let d = sparse_noisy_blocks();
        let grid = SweepGrid {
            factors: vec![12],
            iterations: vec![2],
            lambdas: vec![0.5],
        };
        let render = |threads: usize| -> Result<Vec<u8>, String> {
            let cfg = EvalConfig {
                trials: 10,
                base_seed: 7007,
                trial_threads: threads,
                train: TrainConfig {
                    threads,
                    ..TrainConfig::default()
                },
                ..EvalConfig::default()
            };
            let rows = sweep(&d, &grid, &cfg).map_err(|e| e.to_string())?;
            let mut out = Vec::new();
            write_sweep_csv(&rows, &mut out, Timing::Omit).map_err(|e| e.to_string())?;
            Ok(out)
        };
        let reference = render(1)?;
        for threads in [1, 2, 4] {
            for run in 0..2 {
                check(
                    render(threads)? == reference,
                    format!("CSV differs at {threads} threads (run {run})"),
                )?;
            }
        }
        Ok(format!("{} bytes identical at 1, 2, 4 threads", reference.len()))
    })
}

fn ac8_crunchbase() -> Outcome {
    let Ok(path) = std::env::var("ALSREC_CRUNCHBASE_CSV") else {
        return Outcome::Skip("ALSREC_CRUNCHBASE_CSV not set; Crunchbase 2013 snapshot unavailable".into());
    };
    timed(None, || {
        let file = std::fs::File::open(&path).map_err(|e| format!("{path}: {e}"))?;
        let d = InteractionDataset::read_csv(std::io::BufReader::new(file)).map_err(|e| e.to_string())?;
        let run = |data: &InteractionDataset, factors, iterations, lambda| -> Result<f64, String> {
            let cfg = EvalConfig {
                base_seed: 8008,
                train: TrainConfig {
                    factors,
                    iterations,
                    lambda,
                    ..TrainConfig::default()
                },
                ..EvalConfig::default()
            };
            evaluate(data, &cfg).map(|e| e.accuracy_mean).map_err(|e| e.to_string())
        };
        let mut report = Vec::new();
        for (label, data, f, it, lambda, target) in [
            ("f=2400 it=2 λ=0", &d, 2400, 2, 0.0, 0.133),
            ("f=1400 it=5 λ=2.5", &d, 1400, 5, 2.5, 0.122),
            ("transposed f=1300 it=2 λ=0", &d.transpose(), 1300, 2, 0.0, 0.111),
        ] {
            let acc = run(data, f, it, lambda)?;
            check(
                (acc - target).abs() <= 0.015,
                format!("{label}: accuracy {acc:.4}, expected {target} ± 0.015"),
            )?;
            report.push(format!("{label}: {acc:.4}"));
        }
        let timing_cfg = TrainConfig {
            factors: 1400,
            iterations: 1,
            ..TrainConfig::default()
        };
        let start = Instant::now();
        train(&d, &timing_cfg).map_err(|e| e.to_string())?;
        let per_iteration = start.elapsed().as_secs_f64();
        check(
            per_iteration <= 4.0 * 8.0,
            format!("one iteration at f=1400 took {per_iteration:.1}s (> 32s)"),
        )?;
        report.push(format!("{per_iteration:.1}s/iteration at f=1400"));
        Ok(report.join("; "))
    })
}

fn ac9_overfitting_signature() -> Outcome {
    timed(None, || {
        let d = sparse_noisy_blocks();
        let grid = SweepGrid {
            factors: vec![190],
            iterations: (1..=8).collect(),
            lambdas: vec![0.0],
        };
        let cfg = EvalConfig {
            trials: 50,
            base_seed: 3,
            ..EvalConfig::default()
        };
        let rows = sweep(&d, &grid, &cfg).map_err(|e| e.to_string())?;
        for w in rows.windows(2) {
            check(
                w[1].loss_final_mean < w[0].loss_final_mean,
                format!(
                    "training loss did not decrease from {} to {} iterations",
                    w[0].iterations, w[1].iterations
                ),
            )?;
        }
        let (best, peak) = rows
            .iter()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), r| {
                if r.accuracy_mean > bv {
                    (r.iterations, r.accuracy_mean)
                } else {
                    (bi, bv)
                }
            });
        let curve: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.accuracy_mean)).collect();
        check(
            best <= 4,
            format!("accuracy peaks at {best} iterations (> 4): [{}]", curve.join(", ")),
        )?;
        Ok(format!(
            "accuracy peaks at {best} iterations ({peak:.3}) while loss keeps falling: [{}]",
            curve.join(", ")
        ))
    })
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("AC1 CG correctness", ac1_cg_correctness),
        ("AC2 loss identity vs brute force", ac2_loss_identity),
        ("AC3 half-update optimality ordering", ac3_half_update_ordering),
        ("AC4 monotone descent with exact solves", ac4_monotone_descent),
        ("AC5 protocol integrity", ac5_protocol_integrity),
        ("AC6 planted-structure recovery", ac6_planted_recovery),
        ("AC6 5x over k/C random baseline", ac6_baseline_ratio),
        ("AC7 determinism across thread counts", ac7_determinism),
        ("AC8 Crunchbase headline numbers (conditional)", ac8_crunchbase),
        ("AC9 overfitting signature", ac9_overfitting_signature),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (name, run) in criteria {
        match run() {
            Outcome::Pass(detail) => println!("PASS  {name}: {detail}"),
            Outcome::Skip(detail) => println!("SKIP  {name}: {detail}"),
            Outcome::Fail(detail) => {
                failures += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    let _ = panic::take_hook();
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
