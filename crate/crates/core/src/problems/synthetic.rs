use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ConstrainedProblem;
use crate::oracles::{NoisyOracle, OracleError, Sample};
use crate::rng::Substream;

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `||x||^2` plus Gaussian noise, no constraints. Starts at `(1, ..., 1)`.
#[derive(Debug, Clone)]
pub struct NoisySphere {
    name: String,
    n: usize,
    noise_sd: f64,
    x0: Vec<f64>,
}

impl NoisySphere {
    pub fn new(n: usize, noise_sd: f64) -> Self {
        assert!(n >= 1, "dimension must be positive");
        assert!(noise_sd >= 0.0, "noise sd must be non-negative");
        Self {
            name: format!("noisy-sphere-{n}"),
            n,
            noise_sd,
            x0: vec![1.0; n],
        }
    }

    pub fn with_initial_point(mut self, x0: Vec<f64>) -> Self {
        assert_eq!(x0.len(), self.n);
        self.x0 = x0;
        self
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn value(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }
}

impl NoisyOracle for NoisySphere {
    fn num_constraints(&self) -> usize {
        0
    }

    fn sample(&self, x: &[f64], rng: &mut Substream) -> Result<Sample, OracleError> {
        let mut f = Self::value(x);
        if self.noise_sd > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            f += self.noise_sd * z;
        }
        Ok(Sample { f, c: Vec::new() })
    }

    fn variance_bound(&self) -> Option<f64> {
        Some(self.noise_sd * self.noise_sd)
    }
}

impl ConstrainedProblem for NoisySphere {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.n
    }

    fn initial_point(&self) -> Vec<f64> {
        self.x0.clone()
    }

    fn exact_objective(&self, x: &[f64]) -> Option<f64> {
        Some(Self::value(x))
    }

    fn exact_constraints(&self, _x: &[f64]) -> Option<Vec<f64>> {
        Some(Vec::new())
    }

    fn known_optimum(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `||x - t||^2` over the ball `||x - center||^2 <= r^2`, with the target
/// `t = center + 2 r e_1` outside the ball. The optimum is `center + r e_1`
/// with value `r^2`.
///
/// Objective draws carry Gaussian noise; constraint draws carry optional
/// uniform noise on `[-b, b]`. The start is the ball center.
#[derive(Debug, Clone)]
pub struct ConstrainedQuadratic {
    name: String,
    n: usize,
    noise_sd: f64,
    constraint_noise: f64,
    radius: f64,
    center: Vec<f64>,
    target: Vec<f64>,
}

impl ConstrainedQuadratic {
    pub fn new(n: usize, noise_sd: f64, ball_radius: f64) -> Self {
        assert!(n >= 1, "dimension must be positive");
        assert!(ball_radius > 0.0, "ball radius must be positive");
        let center = vec![0.0; n];
        let mut target = center.clone();
        target[0] += 2.0 * ball_radius;
        Self {
            name: format!("constrained-quadratic-{n}"),
            n,
            noise_sd,
            constraint_noise: 0.0,
            radius: ball_radius,
            center,
            target,
        }
    }

    /// Adds uniform `[-b, b]` noise to constraint draws.
    pub fn with_constraint_noise(mut self, b: f64) -> Self {
        self.constraint_noise = b;
        self
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn optimum_point(&self) -> Vec<f64> {
        let mut x = self.center.clone();
        x[0] += self.radius;
        x
    }

    fn objective(&self, x: &[f64]) -> f64 {
        sq_dist(x, &self.target)
    }

    fn constraint(&self, x: &[f64]) -> f64 {
        sq_dist(x, &self.center) - self.radius * self.radius
    }
}

impl NoisyOracle for ConstrainedQuadratic {
    fn num_constraints(&self) -> usize {
        1
    }

    fn sample(&self, x: &[f64], rng: &mut Substream) -> Result<Sample, OracleError> {
        let mut f = self.objective(x);
        if self.noise_sd > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            f += self.noise_sd * z;
        }
        let mut c = self.constraint(x);
        if self.constraint_noise > 0.0 {
            c += self.constraint_noise * (2.0 * rng.random::<f64>() - 1.0);
        }
        Ok(Sample { f, c: vec![c] })
    }

    fn variance_bound(&self) -> Option<f64> {
        Some(self.noise_sd * self.noise_sd)
    }
}

impl ConstrainedProblem for ConstrainedQuadratic {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.n
    }

    fn initial_point(&self) -> Vec<f64> {
        self.center.clone()
    }

    fn exact_objective(&self, x: &[f64]) -> Option<f64> {
        Some(self.objective(x))
    }

    fn exact_constraints(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![self.constraint(x)])
    }

    fn known_optimum(&self) -> Option<f64> {
        Some(self.radius * self.radius)
    }
}
