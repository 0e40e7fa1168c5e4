//! Guided search distribution and the two recombination maps.
//!
//! Directions are drawn from `N(0, C)` with
//! `C = (alpha / n) I + ((1 - alpha) / m) U U^T`, where the columns of `U` are
//! an orthonormal basis of the span of the last `m` surrogate gradients. The
//! sampling scale `sigma_es` is applied by the engine, not here.

use std::collections::VecDeque;

use log::debug;
use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::constraints::BarrierValue;
use crate::rng::Substream;

/// Columns whose residual after projection falls below this fraction of the
/// input norm are treated as linearly dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Gradients shorter than this are not stored.
pub const MIN_GRADIENT_NORM: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuidedError {
    #[error("surrogate gradient has norm {0:e}; skipped")]
    ZeroGradient(f64),
    #[error("cannot sample directions in dimension 0")]
    DegenerateSampler,
    #[error("invalid recombination weights: {0}")]
    WeightError(String),
    #[error("every selected offspring is infeasible")]
    AllInfeasible,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthonormal basis of the span of `gradients`, in input order.
///
/// Modified Gram-Schmidt with a second orthogonalization pass. A vector whose
/// residual is below `RANK_TOLERANCE` times its own norm adds no column.
pub fn orthonormal_basis(gradients: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for g in gradients {
        let input_norm = norm(g);
        if input_norm == 0.0 {
            continue;
        }
        let mut v = g.clone();
        for _pass in 0..2 {
            for q in &basis {
                let proj = dot(q, &v);
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= proj * qi);
            }
        }
        let residual = norm(&v);
        if residual < RANK_TOLERANCE * input_norm {
            continue;
        }
        v.iter_mut().for_each(|vi| *vi /= residual);
        basis.push(v);
    }
    basis
}

/// Ring of the `m` most recent surrogate gradients and their basis.
#[derive(Debug, Clone)]
pub struct SurrogateBuffer {
    capacity: usize,
    dim: usize,
    gradients: VecDeque<Vec<f64>>,
    basis: Vec<Vec<f64>>,
}

impl SurrogateBuffer {
    pub fn new(capacity: usize, dim: usize) -> Self {
        Self {
            capacity,
            dim,
            gradients: VecDeque::with_capacity(capacity),
            basis: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.gradients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gradients.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.gradients.len() >= self.capacity
    }

    pub fn gradients(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.gradients.iter()
    }

    /// Basis columns (`k <= m` of them, each of length `n`).
    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    /// Stores `g`, evicting the oldest gradient when full, and recomputes the
    /// basis. Near-zero gradients are rejected and leave the buffer unchanged.
    pub fn push(&mut self, g: Vec<f64>) -> Result<(), GuidedError> {
        if g.len() != self.dim {
            return Err(GuidedError::DimensionMismatch {
                expected: self.dim,
                got: g.len(),
            });
        }
        let g_norm = norm(&g);
        if !(g_norm >= MIN_GRADIENT_NORM) {
            debug!("skipping surrogate gradient with norm {g_norm:e}");
            return Err(GuidedError::ZeroGradient(g_norm));
        }
        if self.capacity == 0 {
            return Ok(());
        }
        if self.gradients.len() == self.capacity {
            self.gradients.pop_front();
        }
        self.gradients.push_back(g);
        let grads: Vec<Vec<f64>> = self.gradients.iter().cloned().collect();
        self.basis = orthonormal_basis(&grads);
        Ok(())
    }
}

/// `N(0, C)` search distribution over unit-scale directions.
#[derive(Debug, Clone, Copy)]
pub struct GesDistribution<'a> {
    pub alpha: f64,
    pub buffer: &'a SurrogateBuffer,
}

impl<'a> GesDistribution<'a> {
    pub fn new(alpha: f64, buffer: &'a SurrogateBuffer) -> Self {
        Self { alpha, buffer }
    }

    pub fn dim(&self) -> usize {
        self.buffer.dim()
    }

    /// Isotropic weight; forced to 1 while no basis is available.
    pub fn effective_alpha(&self) -> f64 {
        if self.buffer.rank() == 0 || self.buffer.capacity() == 0 {
            1.0
        } else {
            self.alpha
        }
    }

    fn scales(&self) -> (f64, f64) {
        let a = self.effective_alpha();
        let n = self.dim() as f64;
        let m = self.buffer.capacity().max(1) as f64;
        (a / n, (1.0 - a) / m)
    }

    /// `(alpha / n) I + ((1 - alpha) / m) U U^T`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.dim();
        let (iso, sub) = self.scales();
        let mut c = DMatrix::<f64>::identity(n, n) * iso;
        for u in self.buffer.basis() {
            for i in 0..n {
                for j in 0..n {
                    c[(i, j)] += sub * u[i] * u[j];
                }
            }
        }
        c
    }

    /// Trace of the covariance, `alpha + (1 - alpha) k / m` for `k` basis columns.
    pub fn covariance_trace(&self) -> f64 {
        let a = self.effective_alpha();
        let m = self.buffer.capacity().max(1) as f64;
        a + (1.0 - a) * self.buffer.rank() as f64 / m
    }

    /// Draws `sqrt(alpha / n) xi + sqrt((1 - alpha) / m) U xi'`.
    pub fn sample_direction(&self, rng: &mut Substream) -> Result<Vec<f64>, GuidedError> {
        let n = self.dim();
        if n == 0 {
            return Err(GuidedError::DegenerateSampler);
        }
        let (iso, sub) = self.scales();
        let iso = iso.sqrt();
        let mut d: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                iso * z
            })
            .collect();
        if sub > 0.0 {
            let sub = sub.sqrt();
            for u in self.buffer.basis() {
                let z: f64 = StandardNormal.sample(rng);
                d.iter_mut().zip(u).for_each(|(di, ui)| *di += sub * z * ui);
            }
        }
        Ok(d)
    }
}

/// `[d_1, ..., d_l, -d_1, ..., -d_l]`.
pub fn mirrored_pairs(directions: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = directions.to_vec();
    out.extend(directions.iter().map(|d| d.iter().map(|x| -x).collect()));
    out
}

/// Log-rank recombination weights `w_i ∝ ln(mu + 1/2) - ln(i)`, normalized.
pub fn log_rank_weights(mu: usize) -> Vec<f64> {
    let top = (mu as f64 + 0.5).ln();
    let raw: Vec<f64> = (1..=mu).map(|i| top - (i as f64).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

pub fn uniform_weights(mu: usize) -> Vec<f64> {
    vec![1.0 / mu as f64; mu]
}

/// Weighted average `sum_i w_i d_i` with weights on the simplex.
pub fn psi_average(directions: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>, GuidedError> {
    const TOL: f64 = 1e-12;
    if directions.len() != weights.len() {
        return Err(GuidedError::WeightError(format!(
            "{} weights for {} directions",
            weights.len(),
            directions.len()
        )));
    }
    if weights.iter().any(|&w| !(w >= -TOL)) {
        return Err(GuidedError::WeightError("negative weight".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > TOL {
        return Err(GuidedError::WeightError(format!("weights sum to {total}")));
    }
    let n = directions.first().map_or(0, Vec::len);
    let mut out = vec![0.0; n];
    for (d, &w) in directions.iter().zip(weights) {
        if d.len() != n {
            return Err(GuidedError::DimensionMismatch {
                expected: n,
                got: d.len(),
            });
        }
        out.iter_mut().zip(d).for_each(|(o, di)| *o += w * di);
    }
    Ok(out)
}

/// Antithetic guided update `-(beta / (sigma_es lambda)) sum_i (f_i - f_{i+l}) d_i`.
///
/// `directions[i]` produced `f_pairs[i].0` at `x + sigma_es d_i` and
/// `f_pairs[i].1` at its mirror. Pairs with an infeasible member are skipped.
pub fn psi_guided(
    directions: &[Vec<f64>],
    f_pairs: &[(BarrierValue, BarrierValue)],
    sigma_es: f64,
    beta: f64,
    lambda: usize,
) -> Result<Vec<f64>, GuidedError> {
    if directions.len() != f_pairs.len() {
        return Err(GuidedError::DimensionMismatch {
            expected: directions.len(),
            got: f_pairs.len(),
        });
    }
    let n = directions.first().map_or(0, Vec::len);
    let scale = -beta / (sigma_es * lambda as f64);
    let mut out = vec![0.0; n];
    let mut used = 0usize;
    for (d, pair) in directions.iter().zip(f_pairs) {
        let (BarrierValue::Finite(plus), BarrierValue::Finite(minus)) = *pair else {
            continue;
        };
        used += 1;
        let w = scale * (plus - minus);
        out.iter_mut().zip(d).for_each(|(o, di)| *o += w * di);
    }
    if used == 0 {
        return Err(GuidedError::AllInfeasible);
    }
    Ok(out)
}
