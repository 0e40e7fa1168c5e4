//! Named benchmark configurations, a multi-seed driver and the accuracy
//! frequency audit.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::diagnostics::{
    sigma_convergence_check, wilson_lower_bound, write_trace, RunConfig, TraceError, Z_99,
};
use crate::engine::{run_with, EngineConfig, EngineError, RunOutcome, TraceOptions};
use crate::oracles::{AccuracySchedule, ScheduleMode};
use crate::problems::{problem_by_name, RegistryError};

/// Names accepted by [`suite_config`].
pub const SUITE_NAMES: [&str; 6] = [
    "sphere",
    "constrained-quadratic",
    "lyapunov",
    "accuracy",
    "chain-entropy",
    "grid-cmdp",
];

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("unknown suite `{0}`; known: {known}", known = SUITE_NAMES.join(", "))]
    UnknownSuite(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("seed {seed}: {source}")]
    Engine { seed: u64, source: EngineError },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Configuration of a named benchmark.
///
/// * `sphere`: noisy 10-d sphere, default engine settings, fixed batches of 40.
/// * `constrained-quadratic`: 2-d quadratic over the unit ball, same settings.
/// * `lyapunov`: symmetric step factors 1.01 without clamping, estimates
///   accurate to `0.001 sigma^2` with probability 0.75, on a low-noise sphere.
/// * `accuracy`: sample counts from the concentration bound at
///   `eps_f = 0.1`, `p = 0.75`, with every iteration audited; the step size is
///   kept in `[0.25, 0.5]` so the bound stays affordable.
/// * `chain-entropy`: chain MDP with entropy bounds; step sizes in
///   `[0.01, 5]` because policy logits need moves of order one.
/// * `grid-cmdp`: gridworld CMDP with cost threshold 30, default engine settings.
pub fn suite_config(name: &str) -> Result<RunConfig, SuiteError> {
    let base = EngineConfig::default();
    let fixed = AccuracySchedule::fixed(40);
    let config = match name {
        "sphere" => RunConfig {
            problem: "noisy-sphere-10".into(),
            engine: EngineConfig {
                budget: 2000,
                ..base
            },
            schedule: fixed,
            trace: TraceOptions::default(),
        },
        "constrained-quadratic" => RunConfig {
            problem: "constrained-quadratic-2".into(),
            engine: EngineConfig {
                budget: 1000,
                ..base
            },
            schedule: fixed,
            trace: TraceOptions::default(),
        },
        "lyapunov" => RunConfig {
            problem: "low-noise-sphere-10".into(),
            engine: EngineConfig {
                sigma0: 0.5,
                offspring_samples: Some(10),
                budget: 200,
                ..EngineConfig::theory(1.01)
            },
            schedule: AccuracySchedule::theoretical(0.001, 0.75),
            trace: TraceOptions::default(),
        },
        "accuracy" => RunConfig {
            problem: "noisy-sphere-10".into(),
            engine: EngineConfig {
                sigma0: 0.5,
                sigma_min: 0.25,
                sigma_max: 0.5,
                offspring_samples: Some(10),
                budget: 1000,
                ..base
            },
            schedule: AccuracySchedule::theoretical(0.1, 0.75),
            trace: TraceOptions {
                audit_accuracy: true,
                ..TraceOptions::default()
            },
        },
        "chain-entropy" => RunConfig {
            problem: "chain-entropy".into(),
            engine: EngineConfig {
                sigma0: 5.0,
                sigma_min: 0.01,
                sigma_max: 5.0,
                budget: 500,
                ..base
            },
            schedule: fixed,
            trace: TraceOptions::default(),
        },
        "grid-cmdp" => RunConfig {
            problem: "grid-cmdp".into(),
            engine: EngineConfig {
                budget: 500,
                ..base
            },
            schedule: fixed,
            trace: TraceOptions::default(),
        },
        _ => return Err(SuiteError::UnknownSuite(name.to_string())),
    };
    Ok(config)
}

/// End-of-run figures for one seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub iterations: usize,
    pub successes: usize,
    pub initial_f_exact: Option<f64>,
    pub final_f_exact: Option<f64>,
    pub final_f_est: f64,
    pub final_violation: f64,
    pub final_sigma: f64,
    pub sigma_converged: bool,
    /// All oracle draws, including initialization, warm-up and audits.
    pub samples: u64,
}

pub struct SeedRun {
    pub seed: u64,
    pub outcome: RunOutcome,
    pub summary: SeedSummary,
}

fn summarize(seed: u64, outcome: &RunOutcome, initial_f_exact: Option<f64>) -> SeedSummary {
    let last = outcome.trace.last();
    let iter_samples: u64 = outcome.trace.iter().map(|r| r.samples).sum();
    SeedSummary {
        seed,
        iterations: outcome.trace.len(),
        successes: outcome.trace.iter().filter(|r| r.success).count(),
        initial_f_exact,
        final_f_exact: last.map_or(initial_f_exact, |r| r.f_exact),
        final_f_est: outcome.final_state.f_incumbent,
        final_violation: last.map_or(0.0, |r| r.violation),
        final_sigma: outcome.final_state.sigma,
        sigma_converged: sigma_convergence_check(&outcome.trace),
        samples: iter_samples
            + outcome.init_samples
            + outcome.warmup_samples
            + outcome.audit_samples,
    }
}

/// Runs `config` once per seed. Seeds run concurrently; results come back in
/// seed order and do not depend on the thread count.
pub fn run_seeds(config: &RunConfig, seeds: &[u64]) -> Result<Vec<SeedRun>, SuiteError> {
    let problem = problem_by_name(&config.problem)?;
    let initial_f = problem.exact_objective(&problem.initial_point());
    seeds
        .par_iter()
        .map(|&seed| {
            let outcome = run_with(
                &config.engine,
                &config.schedule,
                &config.trace,
                problem.as_ref(),
                seed,
            )
            .map_err(|source| SuiteError::Engine { seed, source })?;
            let summary = summarize(seed, &outcome, initial_f);
            Ok(SeedRun {
                seed,
                outcome,
                summary,
            })
        })
        .collect()
}

/// Writes `seed-<k>.csv` for every run into `dir`.
pub fn write_seed_traces(runs: &[SeedRun], dir: &Path) -> Result<(), SuiteError> {
    std::fs::create_dir_all(dir).map_err(TraceError::from)?;
    for run in runs {
        write_trace(
            &run.outcome.trace,
            &dir.join(format!("seed-{}.csv", run.seed)),
        )?;
    }
    Ok(())
}

/// Frequency of accuracy events over audited iterations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub schedule: ScheduleMode,
    pub eps_f: f64,
    pub p: f64,
    pub audited: usize,
    pub accurate: usize,
    pub frequency: f64,
    /// One-sided 99% Wilson lower bound on the accuracy probability.
    pub lower_bound: f64,
    /// Whether the lower bound reaches `p`.
    pub compliant: bool,
}

/// Runs `iterations` iterations with per-iteration accuracy auditing and
/// tallies the events. Iterations without exact references or without a
/// feasible trial are not audited.
pub fn check_accuracy(
    config: &RunConfig,
    iterations: usize,
    seed: u64,
) -> Result<AccuracyReport, SuiteError> {
    let problem = problem_by_name(&config.problem)?;
    let engine = EngineConfig {
        budget: iterations,
        ..config.engine.clone()
    };
    let options = TraceOptions {
        audit_accuracy: true,
        ..config.trace
    };
    let outcome = run_with(&engine, &config.schedule, &options, problem.as_ref(), seed)
        .map_err(|source| SuiteError::Engine { seed, source })?;
    let events: Vec<bool> = outcome
        .trace
        .iter()
        .filter_map(|r| r.accuracy_event)
        .collect();
    let audited = events.len();
    let accurate = events.iter().filter(|&&e| e).count();
    let lower_bound = wilson_lower_bound(accurate, audited, Z_99);
    Ok(AccuracyReport {
        schedule: config.schedule.mode,
        eps_f: config.schedule.eps_f,
        p: config.schedule.p,
        audited,
        accurate,
        frequency: if audited == 0 {
            0.0
        } else {
            accurate as f64 / audited as f64
        },
        lower_bound,
        compliant: audited > 0 && lower_bound >= config.schedule.p,
    })
}
