//! The outer loop: sample offspring around the incumbent, rank them through
//! the adjusted barrier, recombine into a direction, and accept the trial
//! step only on sufficient decrease of the barrier estimate.

use std::time::Instant;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{adjusted_barrier, violation, BarrierValue};
use crate::diagnostics::{lyapunov, TraceRecord};
use crate::guided::{
    log_rank_weights, mirrored_pairs, norm, psi_average, psi_guided, uniform_weights,
    GesDistribution, GuidedError, SurrogateBuffer,
};
use crate::oracles::{
    accuracy_event, estimate_mean, AccuracySchedule, Estimate, OracleError, VarianceTracker,
};
use crate::problems::ConstrainedProblem;
use crate::rng::{substream, Purpose, Substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiKind {
    /// Weighted average of the best `lambda'` directions.
    WeightedAverage,
    /// Antithetic finite-difference update over mirrored pairs.
    GuidedAntithetic,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankWeights {
    #[default]
    LogRank,
    Uniform,
}

/// Where the surrogate gradients spanning the guided subspace come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateSource {
    /// Previously accepted update directions.
    #[default]
    UpdateDirections,
    /// The problem's own gradient estimate (policy gradients on MDPs).
    PolicyGradient,
    /// Central differences of noisy objective estimates.
    FiniteDifference,
}

fn enabled() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub lambda: usize,
    pub lambda_prime: usize,
    pub sigma0: f64,
    pub sigma_es0: f64,
    pub gamma_up: f64,
    pub gamma_down: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub kappa: f64,
    pub d_max: f64,
    pub eps_c: f64,
    pub psi_kind: PsiKind,
    pub beta: f64,
    pub alpha: f64,
    pub m: usize,
    pub budget: usize,
    /// Mirror the offspring of `WeightedAverage` (the antithetic map always
    /// mirrors).
    #[serde(default = "enabled")]
    pub mirrored: bool,
    #[serde(default)]
    pub weights: RankWeights,
    /// Fill the surrogate buffer for `m` rounds before the first iteration.
    #[serde(default = "enabled")]
    pub warmup: bool,
    #[serde(default)]
    pub surrogate: SurrogateSource,
    /// Draws per offspring estimate; the accuracy schedule is used when unset.
    #[serde(default)]
    pub offspring_samples: Option<usize>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            lambda: 40,
            lambda_prime: 20,
            sigma0: 0.1,
            sigma_es0: 1.0,
            gamma_up: 1.01,
            gamma_down: 0.99,
            sigma_min: 0.001,
            sigma_max: 0.1,
            kappa: 0.005,
            d_max: 10.0,
            eps_c: 1.0,
            psi_kind: PsiKind::GuidedAntithetic,
            beta: 5.0,
            alpha: 0.5,
            m: 20,
            budget: 1000,
            mirrored: true,
            weights: RankWeights::LogRank,
            warmup: true,
            surrogate: SurrogateSource::UpdateDirections,
            offspring_samples: None,
        }
    }
}

impl EngineConfig {
    /// Symmetric step factors `gamma` and `1 / gamma` without clamping.
    pub fn theory(gamma: f64) -> Self {
        Self {
            gamma_up: gamma,
            gamma_down: 1.0 / gamma,
            sigma_min: f64::MIN_POSITIVE,
            sigma_max: f64::MAX,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::InvalidConfig(msg));
        if self.lambda_prime == 0 || self.lambda < self.lambda_prime {
            return bad(format!(
                "need lambda >= lambda_prime >= 1, got {} and {}",
                self.lambda, self.lambda_prime
            ));
        }
        if self.psi_kind == PsiKind::GuidedAntithetic && self.lambda != 2 * self.lambda_prime {
            return bad(format!(
                "the antithetic map needs lambda = 2 lambda_prime, got {} and {}",
                self.lambda, self.lambda_prime
            ));
        }
        if self.psi_kind == PsiKind::WeightedAverage && self.mirrored && self.lambda % 2 != 0 {
            return bad(format!(
                "mirrored sampling needs an even lambda, got {}",
                self.lambda
            ));
        }
        let positive = [
            ("sigma0", self.sigma0),
            ("sigma_es0", self.sigma_es0),
            ("sigma_min", self.sigma_min),
            ("sigma_max", self.sigma_max),
            ("kappa", self.kappa),
            ("d_max", self.d_max),
            ("beta", self.beta),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.eps_c >= 0.0 && self.eps_c.is_finite()) {
            return bad(format!("eps_c must be non-negative, got {}", self.eps_c));
        }
        if !(self.gamma_up >= 1.0 && self.gamma_up.is_finite()) {
            return bad(format!("gamma_up must be >= 1, got {}", self.gamma_up));
        }
        if !(self.gamma_down > 0.0 && self.gamma_down <= 1.0) {
            return bad(format!(
                "gamma_down must lie in (0, 1], got {}",
                self.gamma_down
            ));
        }
        if self.sigma_min > self.sigma_max {
            return bad("sigma_min exceeds sigma_max".into());
        }
        if !(self.sigma_min <= self.sigma0 && self.sigma0 <= self.sigma_max) {
            return bad(format!(
                "sigma0 = {} outside [sigma_min, sigma_max]",
                self.sigma0
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.alpha < 1.0 && self.m == 0 {
            return bad("alpha < 1 needs a surrogate buffer (m >= 1)".into());
        }
        if self.offspring_samples == Some(0) {
            return bad("offspring_samples must be positive".into());
        }
        Ok(())
    }

    fn uses_subspace(&self) -> bool {
        self.alpha < 1.0 && self.m > 0
    }

    fn samples_mirrored(&self) -> bool {
        self.psi_kind == PsiKind::GuidedAntithetic || self.mirrored
    }
}

/// Diagnostics recorded alongside a run. They never influence the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceOptions {
    /// Weight of the objective in the Lyapunov column.
    pub nu: f64,
    /// Draw an independent estimate at the incumbent each iteration and
    /// record whether both it and the trial estimate are accurate.
    #[serde(default)]
    pub audit_accuracy: bool,
    #[serde(default)]
    pub record_wall_time: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            nu: 0.95,
            audit_accuracy: false,
            record_wall_time: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("initial point violates the relaxed constraints: max c = {max_c} > {tolerance}")]
    InfeasibleStart { max_c: f64, tolerance: f64 },
    #[error("initial objective estimate is not finite ({0})")]
    NonFiniteObjective(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("oracle: {0}")]
    Oracle(#[from] OracleError),
    #[error("sampler: {0}")]
    Sampler(#[from] GuidedError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchState {
    pub x: Vec<f64>,
    pub sigma: f64,
    pub sigma_es: f64,
    /// Carried barrier estimate of the incumbent; always finite.
    pub f_incumbent: f64,
    /// Constraint estimate that admitted the incumbent.
    pub c_incumbent: Vec<f64>,
    pub iteration: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Offspring {
    pub direction: Vec<f64>,
    pub point: Vec<f64>,
    pub barrier: BarrierValue,
    pub index: usize,
}

/// What happened to the trial point of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub iteration: u64,
    /// Step size the acceptance threshold was computed with.
    pub sigma: f64,
    pub f_before: f64,
    /// `None` when no trial was evaluated.
    pub trial: Option<BarrierValue>,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub initial: SearchState,
    pub final_state: SearchState,
    pub trace: Vec<TraceRecord>,
    pub trials: Vec<TrialLog>,
    /// Draws spent estimating the initial point (and the variance pilot).
    pub init_samples: u64,
    /// Draws spent filling the surrogate buffer before the first iteration.
    pub warmup_samples: u64,
    /// Draws spent on accuracy audits; not part of the search.
    pub audit_samples: u64,
}

/// Step sizes after an iteration with the given outcome.
pub fn next_sigmas(config: &EngineConfig, sigma: f64, sigma_es: f64, success: bool) -> (f64, f64) {
    let next = if success {
        (config.gamma_up * sigma).min(config.sigma_max)
    } else {
        (config.gamma_down * sigma).max(config.sigma_min)
    };
    // sigma_es follows the same multiplicative change
    (next, sigma_es * (next / sigma))
}

/// Sufficient-decrease test `trial <= f_k - (kappa / 2) sigma^2`.
pub fn accepts(f_incumbent: f64, trial: BarrierValue, kappa: f64, sigma: f64) -> bool {
    match trial {
        BarrierValue::Finite(v) => v <= f_incumbent - 0.5 * kappa * sigma * sigma,
        BarrierValue::Infeasible => false,
    }
}

/// Rescales `d` onto the sphere of radius `d_max` when it is longer.
pub fn clip_direction(mut d: Vec<f64>, d_max: f64) -> Vec<f64> {
    let len = norm(&d);
    if len > d_max {
        let s = d_max / len;
        d.iter_mut().for_each(|v| *v *= s);
    }
    d
}

/// Ascending by barrier value, ties by index.
pub fn rank_offspring(mut offspring: Vec<Offspring>) -> Vec<Offspring> {
    offspring.sort_by(|a, b| a.barrier.cmp(&b.barrier).then(a.index.cmp(&b.index)));
    offspring
}

/// Draws `lambda` offspring around the state's incumbent. With `mirrored`,
/// the second half negates the first. Barriers start out infeasible until
/// evaluated.
pub fn generate_offspring(
    state: &SearchState,
    sampler: &GesDistribution<'_>,
    lambda: usize,
    mirrored: bool,
    mut stream: impl FnMut(usize) -> Substream,
) -> Result<Vec<Offspring>, GuidedError> {
    let fresh = if mirrored { lambda / 2 } else { lambda };
    let mut directions = Vec::with_capacity(lambda);
    for i in 0..fresh {
        directions.push(sampler.sample_direction(&mut stream(i))?);
    }
    if mirrored {
        directions = mirrored_pairs(&directions);
    }
    Ok(directions
        .into_iter()
        .enumerate()
        .map(|(index, direction)| {
            let point = state
                .x
                .iter()
                .zip(&direction)
                .map(|(x, d)| x + state.sigma_es * d)
                .collect();
            Offspring {
                direction,
                point,
                barrier: BarrierValue::Infeasible,
                index,
            }
        })
        .collect())
}

/// Applies the configured recombination map and clips the result to `d_max`.
///
/// `offspring` must be in generation order with barriers evaluated.
pub fn recombine(
    offspring: &[Offspring],
    config: &EngineConfig,
    sigma_es: f64,
) -> Result<Vec<f64>, GuidedError> {
    let d = match config.psi_kind {
        PsiKind::WeightedAverage => {
            let ranked = rank_offspring(offspring.to_vec());
            let top = &ranked[..config.lambda_prime.min(ranked.len())];
            let weights = match config.weights {
                RankWeights::LogRank => log_rank_weights(top.len()),
                RankWeights::Uniform => uniform_weights(top.len()),
            };
            // infeasible members drop out and the remaining weights are renormalized
            let kept: Vec<(&Offspring, f64)> = top
                .iter()
                .zip(weights)
                .filter(|(o, _)| o.barrier.is_feasible())
                .collect();
            if kept.is_empty() {
                return Err(GuidedError::AllInfeasible);
            }
            let total: f64 = kept.iter().map(|(_, w)| w).sum();
            let dirs: Vec<Vec<f64>> = kept.iter().map(|(o, _)| o.direction.clone()).collect();
            let w: Vec<f64> = kept.iter().map(|(_, w)| w / total).collect();
            psi_average(&dirs, &w)?
        }
        PsiKind::GuidedAntithetic => {
            let half = offspring.len() / 2;
            let dirs: Vec<Vec<f64>> = offspring[..half]
                .iter()
                .map(|o| o.direction.clone())
                .collect();
            let pairs: Vec<(BarrierValue, BarrierValue)> = (0..half)
                .map(|i| (offspring[i].barrier, offspring[i + half].barrier))
                .collect();
            psi_guided(&dirs, &pairs, sigma_es, config.beta, offspring.len())?
        }
    };
    Ok(clip_direction(d, config.d_max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub state: SearchState,
    pub success: bool,
    pub trial: BarrierValue,
}

/// Evaluates `x + sigma d` through `evaluate` and applies the acceptance test
/// and the step-size update. On success the incumbent estimate becomes the
/// trial estimate and the constraint estimate becomes `trial_c`.
pub fn trial_and_accept<F>(
    state: &SearchState,
    d: &[f64],
    config: &EngineConfig,
    evaluate: F,
) -> TrialOutcome
where
    F: FnOnce(&[f64]) -> (BarrierValue, Vec<f64>),
{
    let point: Vec<f64> = state
        .x
        .iter()
        .zip(d)
        .map(|(x, di)| x + state.sigma * di)
        .collect();
    let (trial, trial_c) = evaluate(&point);
    let success = accepts(state.f_incumbent, trial, config.kappa, state.sigma);
    let (sigma, sigma_es) = next_sigmas(config, state.sigma, state.sigma_es, success);
    let mut next = state.clone();
    next.sigma = sigma;
    next.sigma_es = sigma_es;
    next.iteration += 1;
    if success {
        next.x = point;
        next.f_incumbent = trial.as_f64();
        next.c_incumbent = trial_c;
    }
    TrialOutcome {
        state: next,
        success,
        trial,
    }
}

fn failed_iteration(state: &SearchState, config: &EngineConfig) -> SearchState {
    let (sigma, sigma_es) = next_sigmas(config, state.sigma, state.sigma_es, false);
    SearchState {
        sigma,
        sigma_es,
        iteration: state.iteration + 1,
        ..state.clone()
    }
}

/// Stepping driver holding the state, the surrogate buffer and the online
/// variance estimate.
pub struct Engine<'p> {
    config: EngineConfig,
    schedule: AccuracySchedule,
    options: TraceOptions,
    problem: &'p dyn ConstrainedProblem,
    state: SearchState,
    buffer: SurrogateBuffer,
    variance: VarianceTracker,
    started: Instant,
    init_samples: u64,
    warmup_samples: u64,
    audit_samples: u64,
}

fn evaluate_points(
    points: &[&[f64]],
    n: usize,
    problem: &dyn ConstrainedProblem,
    stream: impl Fn(usize) -> Substream + Sync,
) -> Vec<Result<Estimate, OracleError>> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| estimate_mean(p, n, problem, &mut stream(i)))
        .collect()
}

impl<'p> Engine<'p> {
    /// Validates the setup and estimates the objective and constraints at the
    /// initial point.
    pub fn new(
        config: EngineConfig,
        schedule: AccuracySchedule,
        options: TraceOptions,
        problem: &'p dyn ConstrainedProblem,
        seed: u64,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        schedule.validate()?;
        let n = problem.dimension();
        let x0 = problem.initial_point();
        if x0.len() != n || n == 0 {
            return Err(EngineError::InvalidConfig(format!(
                "initial point has {} coordinates for dimension {n}",
                x0.len()
            )));
        }
        let mut engine = Self {
            buffer: SurrogateBuffer::new(if config.uses_subspace() { config.m } else { 0 }, n),
            config,
            schedule,
            options,
            problem,
            state: SearchState {
                x: x0,
                sigma: 0.0,
                sigma_es: 0.0,
                f_incumbent: 0.0,
                c_incumbent: Vec::new(),
                iteration: 0,
                seed,
            },
            variance: VarianceTracker::default(),
            started: Instant::now(),
            init_samples: 0,
            warmup_samples: 0,
            audit_samples: 0,
        };

        if schedule.mode != crate::oracles::ScheduleMode::FixedBatch
            && problem.variance_bound().is_none()
        {
            let pilot = estimate_mean(
                &engine.state.x,
                schedule.n_fixed.max(2),
                problem,
                &mut substream(seed, Purpose::Pilot, 0, 0),
            )?;
            engine.variance.observe(&pilot);
            engine.init_samples += pilot.n_used as u64;
        }

        let sigma0 = engine.config.sigma0;
        let n0 = engine.samples_at(sigma0)?;
        let est = match estimate_mean(
            &engine.state.x,
            n0,
            problem,
            &mut substream(seed, Purpose::Init, 0, 0),
        ) {
            Ok(est) => est,
            Err(OracleError::NonFinite(v)) => return Err(EngineError::NonFiniteObjective(v)),
            Err(e) => return Err(e.into()),
        };
        engine.init_samples += est.n_used as u64;
        let tolerance = engine.config.eps_c * sigma0;
        let max_c = est.c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !adjusted_barrier(est.f, &est.c, engine.config.eps_c, sigma0).is_feasible() {
            return Err(EngineError::InfeasibleStart { max_c, tolerance });
        }
        engine.track(&est);
        engine.state.sigma = sigma0;
        engine.state.sigma_es = engine.config.sigma_es0;
        engine.state.f_incumbent = est.f;
        engine.state.c_incumbent = est.c;

        if engine.config.surrogate == SurrogateSource::PolicyGradient
            && engine.config.uses_subspace()
            && problem
                .surrogate_gradient(
                    &engine.state.x,
                    &mut substream(seed, Purpose::Surrogate, u64::MAX, 0),
                )
                .is_none()
        {
            return Err(EngineError::InvalidConfig(format!(
                "problem `{}` provides no surrogate gradient",
                problem.name()
            )));
        }
        Ok(engine)
    }

    pub fn state(&self) -> &SearchState {
        &self.state
    }

    pub fn buffer(&self) -> &SurrogateBuffer {
        &self.buffer
    }

    fn variance_bound(&self) -> f64 {
        self.problem
            .variance_bound()
            .or_else(|| self.variance.bound())
            .unwrap_or(0.0)
    }

    fn samples_at(&self, sigma: f64) -> Result<usize, OracleError> {
        self.schedule.samples(self.variance_bound(), sigma)
    }

    fn track(&mut self, est: &Estimate) {
        if self.problem.variance_bound().is_none() {
            self.variance.observe(est);
        }
    }

    fn push_surrogate(&mut self, g: Vec<f64>) {
        if let Err(e) = self.buffer.push(g) {
            debug!("surrogate gradient skipped: {e}");
        }
    }

    /// Gradient from the configured provider at the incumbent, with the draws
    /// it cost. `None` for the update-direction provider.
    fn provider_gradient(
        &self,
        purpose: Purpose,
        iteration: u64,
    ) -> Result<Option<(Vec<f64>, u64)>, EngineError> {
        let seed = self.state.seed;
        match self.config.surrogate {
            SurrogateSource::UpdateDirections => Ok(None),
            SurrogateSource::PolicyGradient => {
                let mut rng = substream(seed, purpose, iteration, u64::MAX);
                Ok(self
                    .problem
                    .surrogate_gradient(&self.state.x, &mut rng)
                    .map(|g| (g, 0)))
            }
            SurrogateSource::FiniteDifference => {
                let x = &self.state.x;
                let h = self.state.sigma_es;
                let n = self.schedule.n_fixed;
                let points: Vec<Vec<f64>> = (0..2 * x.len())
                    .map(|j| {
                        let mut p = x.clone();
                        p[j / 2] += if j % 2 == 0 { h } else { -h };
                        p
                    })
                    .collect();
                let refs: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
                let ests = evaluate_points(&refs, n, self.problem, |j| {
                    substream(seed, purpose, iteration, u64::MAX - 1 - j as u64)
                });
                let mut g = vec![0.0; x.len()];
                for (i, gi) in g.iter_mut().enumerate() {
                    match (&ests[2 * i], &ests[2 * i + 1]) {
                        (Ok(a), Ok(b)) => *gi = (a.f - b.f) / (2.0 * h),
                        _ => return Ok(None),
                    }
                }
                Ok(Some((g, (2 * x.len() * n) as u64)))
            }
        }
    }

    /// Samples and evaluates one generation; returns the offspring in
    /// generation order and the draws spent.
    fn generation(
        &mut self,
        purpose_dir: Purpose,
        purpose_eval: Purpose,
        iteration: u64,
    ) -> Result<(Vec<Offspring>, u64), EngineError> {
        let seed = self.state.seed;
        let lambda = self.config.lambda;
        let mut offspring = {
            let dist = GesDistribution::new(self.config.alpha, &self.buffer);
            generate_offspring(
                &self.state,
                &dist,
                lambda,
                self.config.samples_mirrored(),
                |i| substream(seed, purpose_dir, iteration, i as u64),
            )?
        };
        let n = match self.config.offspring_samples {
            Some(n) => n,
            None => self.samples_at(self.state.sigma)?,
        };
        // directions and evaluations of a warm-up round share one purpose
        let offset = if purpose_dir == purpose_eval {
            lambda as u64
        } else {
            0
        };
        let points: Vec<&[f64]> = offspring.iter().map(|o| o.point.as_slice()).collect();
        let ests = evaluate_points(&points, n, self.problem, |i| {
            substream(seed, purpose_eval, iteration, offset + i as u64)
        });
        let mut spent = 0u64;
        for (o, est) in offspring.iter_mut().zip(ests) {
            match est {
                Ok(est) => {
                    spent += est.n_used as u64;
                    o.barrier =
                        adjusted_barrier(est.f, &est.c, self.config.eps_c, self.state.sigma);
                    self.track(&est);
                }
                Err(e) => {
                    spent += n as u64;
                    warn!("offspring {} at iteration {iteration} failed: {e}", o.index);
                    o.barrier = BarrierValue::Infeasible;
                }
            }
        }
        Ok((offspring, spent))
    }

    /// Fills the surrogate buffer with `m` gradients without moving the
    /// incumbent. Does nothing unless warm-up is enabled and the sampler uses
    /// the subspace.
    pub fn warm_up(&mut self) -> Result<(), EngineError> {
        if !(self.config.warmup && self.config.uses_subspace()) {
            return Ok(());
        }
        for w in 0..self.config.m as u64 {
            match self.provider_gradient(Purpose::Warmup, w)? {
                Some((g, spent)) => {
                    self.warmup_samples += spent;
                    self.push_surrogate(g);
                }
                None if self.config.surrogate == SurrogateSource::UpdateDirections => {
                    let (offspring, spent) =
                        self.generation(Purpose::Warmup, Purpose::Warmup, w)?;
                    self.warmup_samples += spent;
                    if let Ok(d) = recombine(&offspring, &self.config, self.state.sigma_es) {
                        if d.iter().all(|v| v.is_finite()) {
                            self.push_surrogate(d);
                        }
                    }
                }
                None => {}
            }
        }
        Ok(())
    }

    /// Runs one iteration and returns its trace record.
    pub fn step(&mut self) -> Result<(TraceRecord, TrialLog), EngineError> {
        let k = self.state.iteration;
        let seed = self.state.seed;
        let mut spent = 0u64;

        if self.config.uses_subspace() {
            if let Some((g, cost)) = self.provider_gradient(Purpose::Surrogate, k)? {
                spent += cost;
                self.push_surrogate(g);
            }
        }

        let (offspring, cost) = self.generation(Purpose::Direction, Purpose::Offspring, k)?;
        spent += cost;

        let before = self.state.clone();
        let direction = match recombine(&offspring, &self.config, self.state.sigma_es) {
            Ok(d) if d.iter().all(|v| v.is_finite()) => Some(d),
            Ok(_) => {
                warn!("non-finite recombined direction at iteration {k}");
                None
            }
            Err(GuidedError::AllInfeasible) => {
                debug!("all selected offspring infeasible at iteration {k}");
                None
            }
            Err(e) => return Err(e.into()),
        };

        let mut trial_est: Option<Estimate> = None;
        let mut trial_point: Option<Vec<f64>> = None;
        let (next, success, trial) = match &direction {
            None => (failed_iteration(&self.state, &self.config), false, None),
            Some(d) => {
                let n = self.samples_at(self.state.sigma)?;
                let eps_c = self.config.eps_c;
                let sigma = self.state.sigma;
                let problem = self.problem;
                let out = trial_and_accept(&self.state, d, &self.config, |p| {
                    trial_point = Some(p.to_vec());
                    match estimate_mean(p, n, problem, &mut substream(seed, Purpose::Trial, k, 0)) {
                        Ok(est) => {
                            let b = adjusted_barrier(est.f, &est.c, eps_c, sigma);
                            let c = est.c.clone();
                            trial_est = Some(est);
                            (b, c)
                        }
                        Err(e) => {
                            warn!("trial evaluation at iteration {k} failed: {e}");
                            (BarrierValue::Infeasible, Vec::new())
                        }
                    }
                });
                spent += n as u64;
                (out.state, out.success, Some(out.trial))
            }
        };
        if let Some(est) = &trial_est {
            self.track(est);
        }

        let accuracy = if self.options.audit_accuracy {
            self.audit(&before, trial_point.as_deref(), trial_est.as_ref())?
        } else {
            None
        };

        if success
            && self.config.surrogate == SurrogateSource::UpdateDirections
            && self.config.uses_subspace()
        {
            if let Some(d) = &direction {
                self.push_surrogate(d.clone());
            }
        }
        self.state = next;

        let f_exact = self.problem.exact_objective(&self.state.x);
        let viol = match self.problem.exact_constraints(&self.state.x) {
            Some(c) => violation(&c),
            None => violation(&self.state.c_incumbent),
        };
        let record = TraceRecord {
            iteration: k,
            sigma: self.state.sigma,
            sigma_es: self.state.sigma_es,
            success,
            f_est: self.state.f_incumbent,
            f_exact,
            violation: viol,
            lyapunov: lyapunov(
                f_exact.unwrap_or(self.state.f_incumbent),
                self.state.sigma,
                self.options.nu,
            ),
            samples: spent,
            accuracy_event: accuracy,
            wall_ms: self
                .options
                .record_wall_time
                .then(|| self.started.elapsed().as_secs_f64() * 1e3),
        };
        let log = TrialLog {
            iteration: k,
            sigma: before.sigma,
            f_before: before.f_incumbent,
            trial,
            accepted: success,
        };
        Ok((record, log))
    }

    /// Accuracy event for the iteration from a fresh estimate at the old
    /// incumbent and the trial estimate, against exact values.
    fn audit(
        &mut self,
        before: &SearchState,
        trial_point: Option<&[f64]>,
        trial_est: Option<&Estimate>,
    ) -> Result<Option<bool>, EngineError> {
        let (Some(tp), Some(te)) = (trial_point, trial_est) else {
            return Ok(None);
        };
        let (Some(f0), Some(f1)) = (
            self.problem.exact_objective(&before.x),
            self.problem.exact_objective(tp),
        ) else {
            return Ok(None);
        };
        let n = self.samples_at(before.sigma)?;
        let mut rng = substream(before.seed, Purpose::Audit, before.iteration, 0);
        let fresh = estimate_mean(&before.x, n, self.problem, &mut rng)?;
        self.audit_samples += fresh.n_used as u64;
        Ok(Some(accuracy_event(
            fresh.f,
            te.f,
            f0,
            f1,
            self.schedule.eps_f,
            before.sigma,
        )))
    }

    /// Warm-up followed by `budget` iterations.
    pub fn run(mut self) -> Result<RunOutcome, EngineError> {
        let initial = self.state.clone();
        self.warm_up()?;
        let budget = self.config.budget;
        let mut trace = Vec::with_capacity(budget);
        let mut trials = Vec::with_capacity(budget);
        for _ in 0..budget {
            let (record, log) = self.step()?;
            trace.push(record);
            trials.push(log);
        }
        Ok(RunOutcome {
            initial,
            final_state: self.state,
            trace,
            trials,
            init_samples: self.init_samples,
            warmup_samples: self.warmup_samples,
            audit_samples: self.audit_samples,
        })
    }
}

/// Estimates the initial point and returns the starting state.
pub fn init_state(
    config: &EngineConfig,
    schedule: &AccuracySchedule,
    problem: &dyn ConstrainedProblem,
    seed: u64,
) -> Result<SearchState, EngineError> {
    Engine::new(
        config.clone(),
        *schedule,
        TraceOptions::default(),
        problem,
        seed,
    )
    .map(|e| e.state)
}

/// Full run with default trace options.
pub fn run(
    config: &EngineConfig,
    schedule: &AccuracySchedule,
    problem: &dyn ConstrainedProblem,
    seed: u64,
) -> Result<RunOutcome, EngineError> {
    run_with(config, schedule, &TraceOptions::default(), problem, seed)
}

pub fn run_with(
    config: &EngineConfig,
    schedule: &AccuracySchedule,
    options: &TraceOptions,
    problem: &dyn ConstrainedProblem,
    seed: u64,
) -> Result<RunOutcome, EngineError> {
    Engine::new(config.clone(), *schedule, *options, problem, seed)?.run()
}
