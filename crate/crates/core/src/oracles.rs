//! Stochastic estimates of the objective and constraints.
//!
//! An oracle returns one noisy draw `(f, c)` per call. Estimates are sample
//! means whose size is chosen by an [`AccuracySchedule`]: either the
//! concentration bound that makes the estimate `p`-probabilistically
//! `eps_f`-accurate at the current step size, a fixed batch, or the bound
//! clipped at a cap.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Substream;

/// Upper limit on a single estimate's sample count. The exact bound grows like
/// `sigma^-4` and is unusable long before it overflows.
pub const MAX_SAMPLES_PER_ESTIMATE: usize = 1_000_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("evaluation failed: {0}")]
    Evaluation(String),
    #[error("non-finite objective estimate {0}")]
    NonFinite(f64),
}

/// One noisy draw of the objective and of every constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub f: f64,
    pub c: Vec<f64>,
}

/// Source of independent noisy draws. Repeated calls with independent
/// substreams are independent.
pub trait NoisyOracle: Send + Sync {
    fn num_constraints(&self) -> usize;

    fn sample(&self, x: &[f64], rng: &mut Substream) -> Result<Sample, OracleError>;

    /// Known bound on the variance of a single objective draw.
    fn variance_bound(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    Theoretical,
    FixedBatch,
    Capped,
}

/// How many draws to average per estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccuracySchedule {
    pub mode: ScheduleMode,
    /// Target accuracy, as a multiple of `sigma^2`.
    pub eps_f: f64,
    /// Target probability of an accurate estimate.
    pub p: f64,
    pub n_fixed: usize,
    pub n_cap: usize,
}

impl Default for AccuracySchedule {
    fn default() -> Self {
        Self::fixed(40)
    }
}

impl AccuracySchedule {
    pub fn fixed(n: usize) -> Self {
        Self {
            mode: ScheduleMode::FixedBatch,
            eps_f: 1e-3,
            p: 0.75,
            n_fixed: n,
            n_cap: 10_000,
        }
    }

    pub fn theoretical(eps_f: f64, p: f64) -> Self {
        Self {
            mode: ScheduleMode::Theoretical,
            eps_f,
            p,
            n_fixed: 40,
            n_cap: MAX_SAMPLES_PER_ESTIMATE,
        }
    }

    pub fn capped(eps_f: f64, p: f64, n_cap: usize) -> Self {
        Self {
            mode: ScheduleMode::Capped,
            eps_f,
            p,
            n_fixed: 40,
            n_cap,
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if self.mode != ScheduleMode::FixedBatch {
            if !(self.eps_f > 0.0 && self.eps_f.is_finite()) {
                return Err(OracleError::Domain(format!(
                    "eps_f must be positive, got {}",
                    self.eps_f
                )));
            }
            if !(self.p > 0.5 && self.p <= 1.0) {
                return Err(OracleError::Domain(format!(
                    "p must lie in (1/2, 1], got {}",
                    self.p
                )));
            }
        }
        if self.n_fixed == 0 || self.n_cap == 0 {
            return Err(OracleError::Domain("sample counts must be positive".into()));
        }
        Ok(())
    }

    /// Whether the objective accuracy satisfies `eps_f < kappa / 4`.
    pub fn theory_compatible(&self, kappa: f64) -> bool {
        self.eps_f > 0.0 && self.eps_f < kappa / 4.0
    }

    /// Number of draws for an estimate at step size `sigma`, given a variance
    /// bound `v` on a single draw.
    pub fn samples(&self, v: f64, sigma: f64) -> Result<usize, OracleError> {
        match self.mode {
            ScheduleMode::FixedBatch => Ok(self.n_fixed),
            ScheduleMode::Theoretical => {
                let n = required_samples(v, self.eps_f, sigma, self.p)?;
                if n > MAX_SAMPLES_PER_ESTIMATE {
                    return Err(OracleError::Domain(format!(
                        "accuracy bound asks for {n} samples at sigma = {sigma}"
                    )));
                }
                Ok(n)
            }
            ScheduleMode::Capped => {
                if self.p >= 1.0 {
                    return Ok(self.n_cap);
                }
                Ok(required_samples(v, self.eps_f, sigma, self.p)?.min(self.n_cap))
            }
        }
    }
}

/// Sample count making a mean of draws with variance at most `v`
/// `p`-probabilistically `eps_f`-accurate at step size `sigma` and meeting the
/// matching variance condition:
///
/// `N >= 16 v / (eps_f^2 sigma^4) * ln(2 / (1 - p))` and `N >= v / (eps_f sigma^4)`.
///
/// Returns at least 1; saturates at `usize::MAX`.
pub fn required_samples(v: f64, eps_f: f64, sigma: f64, p: f64) -> Result<usize, OracleError> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(OracleError::Domain(format!(
            "variance bound must be finite and >= 0, got {v}"
        )));
    }
    if !(eps_f > 0.0 && sigma > 0.0) {
        return Err(OracleError::Domain(
            "eps_f and sigma must be positive".into(),
        ));
    }
    if !(p < 1.0) || p.is_nan() {
        return Err(OracleError::Domain(format!(
            "probability p = {p} makes the bound diverge"
        )));
    }
    let s4 = sigma.powi(4);
    let concentration = 16.0 * v / (eps_f * eps_f * s4) * (2.0 / (1.0 - p)).ln();
    let variance = v / (eps_f * s4);
    let n = concentration.max(variance).ceil();
    // `as` saturates for values beyond usize::MAX
    Ok((n as usize).max(1))
}

/// Sample mean of `n` draws at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub f: f64,
    pub c: Vec<f64>,
    pub n_used: usize,
    /// Unbiased sample variance of the objective draws (`None` for `n = 1`).
    pub f_sample_var: Option<f64>,
}

/// Averages `n` independent draws from `oracle` at `point`.
///
/// Running means are used so that a noiseless oracle returns its value
/// bit-exactly for any `n`.
pub fn estimate_mean<O: NoisyOracle + ?Sized>(
    point: &[f64],
    n: usize,
    oracle: &O,
    rng: &mut Substream,
) -> Result<Estimate, OracleError> {
    let n = n.max(1);
    let r = oracle.num_constraints();
    let mut mean_f = 0.0;
    let mut m2 = 0.0;
    let mut mean_c = vec![0.0; r];
    for k in 1..=n {
        let s = oracle.sample(point, rng)?;
        if s.c.len() != r {
            return Err(OracleError::Evaluation(format!(
                "oracle returned {} constraint values, expected {r}",
                s.c.len()
            )));
        }
        let delta = s.f - mean_f;
        mean_f += delta / k as f64;
        m2 += delta * (s.f - mean_f);
        for (m, c) in mean_c.iter_mut().zip(&s.c) {
            *m += (c - *m) / k as f64;
        }
    }
    if !mean_f.is_finite() {
        return Err(OracleError::NonFinite(mean_f));
    }
    Ok(Estimate {
        f: mean_f,
        c: mean_c,
        n_used: n,
        f_sample_var: (n > 1).then(|| m2 / (n - 1) as f64),
    })
}

fn variance_for<O: NoisyOracle + ?Sized>(
    oracle: &O,
    schedule: &AccuracySchedule,
) -> Result<f64, OracleError> {
    match (schedule.mode, oracle.variance_bound()) {
        (ScheduleMode::FixedBatch, v) => Ok(v.unwrap_or(0.0)),
        (_, Some(v)) => Ok(v),
        (_, None) => Err(OracleError::Domain(
            "schedule needs a variance bound but the oracle declares none".into(),
        )),
    }
}

/// Objective estimate sized by `schedule` at step size `sigma`.
pub fn estimate_objective<O: NoisyOracle + ?Sized>(
    point: &[f64],
    sigma: f64,
    oracle: &O,
    schedule: &AccuracySchedule,
    rng: &mut Substream,
) -> Result<(f64, usize), OracleError> {
    let n = schedule.samples(variance_for(oracle, schedule)?, sigma)?;
    let est = estimate_mean(point, n, oracle, rng)?;
    Ok((est.f, est.n_used))
}

/// Component-wise constraint estimate sized by `schedule` at step size `sigma`.
pub fn estimate_constraints<O: NoisyOracle + ?Sized>(
    point: &[f64],
    sigma: f64,
    oracle: &O,
    schedule: &AccuracySchedule,
    rng: &mut Substream,
) -> Result<Vec<f64>, OracleError> {
    let n = schedule.samples(variance_for(oracle, schedule)?, sigma)?;
    Ok(estimate_mean(point, n, oracle, rng)?.c)
}

/// Event that both objective estimates lie within `eps_f * sigma^2` of the
/// true values.
pub fn accuracy_event(
    f_est0: f64,
    f_est1: f64,
    f_true0: f64,
    f_true1: f64,
    eps_f: f64,
    sigma: f64,
) -> bool {
    let tol = eps_f * sigma * sigma;
    (f_est0 - f_true0).abs() <= tol && (f_est1 - f_true1).abs() <= tol
}

/// Event that both constraint estimates lie within `eps_c * sigma` of the true
/// values in the infinity norm.
pub fn constraint_accuracy_event(
    c_est0: &[f64],
    c_est1: &[f64],
    c_true0: &[f64],
    c_true1: &[f64],
    eps_c: f64,
    sigma: f64,
) -> bool {
    let tol = eps_c * sigma;
    let gap = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    };
    c_est0.len() == c_true0.len()
        && c_est1.len() == c_true1.len()
        && gap(c_est0, c_true0) <= tol
        && gap(c_est1, c_true1) <= tol
}

/// Pooled within-point variance of objective draws, used when the oracle does
/// not declare a bound. The reported bound carries a safety factor of 2.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarianceTracker {
    sum_sq: f64,
    dof: usize,
}

impl VarianceTracker {
    pub const SAFETY_FACTOR: f64 = 2.0;

    pub fn observe(&mut self, est: &Estimate) {
        if let Some(var) = est.f_sample_var {
            let dof = est.n_used - 1;
            self.sum_sq += var * dof as f64;
            self.dof += dof;
        }
    }

    pub fn pooled(&self) -> Option<f64> {
        (self.dof > 0).then(|| self.sum_sq / self.dof as f64)
    }

    pub fn bound(&self) -> Option<f64> {
        self.pooled().map(|v| v * Self::SAFETY_FACTOR)
    }
}
