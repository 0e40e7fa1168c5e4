//! Convergence diagnostics computed from run traces, trace and configuration
//! persistence.

mod config;
mod trace;

pub use config::{parse_config, read_config, write_config, ConfigError, RunConfig};
pub use trace::{
    read_trace, read_trace_from, write_trace, write_trace_to, TraceError, TraceRecord, TRACE_HEADER,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One-sided standard normal quantile at 99%.
pub const Z_99: f64 = 2.326_347_874_040_841;

/// Fewest seeds accepted by [`expected_decrease_audit`].
pub const MIN_AUDIT_SEEDS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("need at least {MIN_AUDIT_SEEDS} seeds, got {0}")]
    InsufficientSeeds(usize),
    #[error("domain error: {0}")]
    Domain(String),
}

/// `nu f + (1 - nu) sigma^2`.
pub fn lyapunov(f: f64, sigma: f64, nu: f64) -> f64 {
    nu * f + (1.0 - nu) * sigma * sigma
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    pub nu: f64,
}

impl LyapunovConfig {
    /// Smallest `nu` with `nu / (1 - nu) >= 4 (gamma^2 - 1) / kappa`.
    pub fn min_theory_nu(gamma: f64, kappa: f64) -> f64 {
        let q = 4.0 * (gamma * gamma - 1.0) / kappa;
        q / (1.0 + q)
    }

    pub fn theory_valid(&self, gamma: f64, kappa: f64) -> bool {
        self.nu > 0.0
            && self.nu < 1.0
            && self.nu / (1.0 - self.nu) >= 4.0 * (gamma * gamma - 1.0) / kappa
    }
}

/// Lyapunov values of a trace, from the exact objective where recorded and
/// the carried estimate otherwise.
pub fn lyapunov_series(trace: &[TraceRecord], nu: f64) -> Vec<f64> {
    trace
        .iter()
        .map(|r| lyapunov(r.f_exact.unwrap_or(r.f_est), r.sigma, nu))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecreaseBucket {
    /// First increment index in the bucket; increment `k` is `Phi_{k+1} - Phi_k`.
    pub start: usize,
    pub end: usize,
    pub mean_increment: f64,
    /// Increments averaged.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecreaseReport {
    pub seeds: usize,
    pub buckets: Vec<DecreaseBucket>,
    /// Indices of buckets with a positive seed-averaged increment.
    pub violations: Vec<usize>,
}

impl DecreaseReport {
    /// Share of buckets whose averaged increment is `<= 0`; `None` without buckets.
    pub fn fraction_non_positive(&self) -> Option<f64> {
        if self.buckets.is_empty() {
            return None;
        }
        Some(1.0 - self.violations.len() as f64 / self.buckets.len() as f64)
    }
}

/// Averages the Lyapunov increments of many seeds over consecutive buckets of
/// `bucket` iterations and flags buckets where the average is positive.
pub fn expected_decrease_audit(
    traces: &[Vec<TraceRecord>],
    nu: f64,
    bucket: usize,
) -> Result<DecreaseReport, DiagnosticsError> {
    if traces.len() < MIN_AUDIT_SEEDS {
        return Err(DiagnosticsError::InsufficientSeeds(traces.len()));
    }
    if bucket == 0 {
        return Err(DiagnosticsError::Domain(
            "bucket width must be positive".into(),
        ));
    }
    let increments: Vec<Vec<f64>> = traces
        .iter()
        .map(|t| {
            let phi = lyapunov_series(t, nu);
            phi.windows(2).map(|w| w[1] - w[0]).collect()
        })
        .collect();
    let longest = increments.iter().map(Vec::len).max().unwrap_or(0);
    let mut buckets = Vec::new();
    let mut violations = Vec::new();
    let mut start = 0;
    while start < longest {
        let end = (start + bucket).min(longest);
        let (mut sum, mut count) = (0.0, 0usize);
        for inc in &increments {
            for v in inc.iter().take(end).skip(start) {
                sum += v;
                count += 1;
            }
        }
        let mean_increment = sum / count as f64;
        if mean_increment > 0.0 {
            violations.push(buckets.len());
        }
        buckets.push(DecreaseBucket {
            start,
            end,
            mean_increment,
            count,
        });
        start = end;
    }
    Ok(DecreaseReport {
        seeds: traces.len(),
        buckets,
        violations,
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Whether the median step size of the last quarter of the trace is at most
/// `ratio` times that of the first quarter. Traces shorter than four records
/// fail.
pub fn sigma_convergence_check_with(trace: &[TraceRecord], ratio: f64) -> bool {
    let q = trace.len() / 4;
    if q == 0 {
        return false;
    }
    let first = median(trace[..q].iter().map(|r| r.sigma).collect());
    let last = median(trace[trace.len() - q..].iter().map(|r| r.sigma).collect());
    last <= ratio * first
}

/// [`sigma_convergence_check_with`] at ratio 0.1.
pub fn sigma_convergence_check(trace: &[TraceRecord]) -> bool {
    sigma_convergence_check_with(trace, 0.1)
}

/// Norm of `-grad` projected onto the tangent cone of the box at `x`.
///
/// Zero exactly when no feasible first-order descent direction exists.
pub fn stationarity_box(
    x: &[f64],
    grad: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Result<f64, DiagnosticsError> {
    let n = x.len();
    if grad.len() != n || lower.len() != n || upper.len() != n {
        return Err(DiagnosticsError::Domain("length mismatch".into()));
    }
    let mut sq = 0.0;
    for i in 0..n {
        if !(lower[i] <= x[i] && x[i] <= upper[i]) {
            return Err(DiagnosticsError::Domain(format!(
                "x[{i}] = {} outside [{}, {}]",
                x[i], lower[i], upper[i]
            )));
        }
        let mut g = -grad[i];
        if x[i] <= lower[i] {
            g = g.max(0.0);
        }
        if x[i] >= upper[i] {
            g = g.min(0.0);
        }
        sq += g * g;
    }
    Ok(sq.sqrt())
}

/// Lower end of the Wilson score interval for a binomial proportion.
pub fn wilson_lower_bound(successes: usize, trials: usize, z: f64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let center = p + z2 / (2.0 * n);
    let spread = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - spread) / (1.0 + z2 / n)).max(0.0)
}
