//! Feasible regions `{x : c_i(x) <= 0}` and the extreme-barrier functions
//! built on top of them.
//!
//! The exact barrier maps a point to its objective value when every
//! constraint holds and to [`BarrierValue::Infeasible`] otherwise. The
//! adjusted barrier does the same with *estimated* constraint values and
//! admits violations up to `eps_c * sigma`, so the admissible region shrinks
//! back onto the true one as the step size goes to zero.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Value of an extreme-barrier function.
///
/// `Infeasible` is the `+inf` branch. It compares strictly greater than every
/// finite value and equal to itself, which makes the type totally ordered.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum BarrierValue {
    Finite(f64),
    Infeasible,
}

impl BarrierValue {
    /// Builds a finite value, mapping non-finite inputs to `Infeasible`.
    pub fn finite(value: f64) -> Self {
        if value.is_finite() {
            BarrierValue::Finite(value)
        } else {
            BarrierValue::Infeasible
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, BarrierValue::Finite(_))
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            BarrierValue::Finite(v) => Some(v),
            BarrierValue::Infeasible => None,
        }
    }

    /// `+inf` for the infeasible branch.
    pub fn as_f64(&self) -> f64 {
        self.value().unwrap_or(f64::INFINITY)
    }
}

impl PartialEq for BarrierValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for BarrierValue {}

impl PartialOrd for BarrierValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for BarrierValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (BarrierValue::Finite(a), BarrierValue::Finite(b)) => a.total_cmp(b),
            (BarrierValue::Finite(_), BarrierValue::Infeasible) => Ordering::Less,
            (BarrierValue::Infeasible, BarrierValue::Finite(_)) => Ordering::Greater,
            (BarrierValue::Infeasible, BarrierValue::Infeasible) => Ordering::Equal,
        }
    }
}

impl fmt::Display for BarrierValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BarrierValue::Finite(v) => write!(f, "{v}"),
            BarrierValue::Infeasible => write!(f, "inf"),
        }
    }
}

/// Exact extreme barrier: `f` if every `c_i <= 0`, else infeasible.
pub fn exact_barrier(f_value: f64, c_values: &[f64]) -> BarrierValue {
    if c_values.iter().all(|&c| c <= 0.0) {
        BarrierValue::finite(f_value)
    } else {
        BarrierValue::Infeasible
    }
}

/// Adjusted barrier on estimates: `f_est` if `max_i c_est_i <= eps_c * sigma`.
///
/// The boundary `c = eps_c * sigma` is feasible. A NaN constraint estimate is
/// treated as a violation.
pub fn adjusted_barrier(f_est: f64, c_est: &[f64], eps_c: f64, sigma: f64) -> BarrierValue {
    let tolerance = eps_c * sigma;
    if c_est.iter().all(|&c| c <= tolerance) {
        BarrierValue::finite(f_est)
    } else {
        BarrierValue::Infeasible
    }
}

/// Largest positive constraint value, `0` for feasible points and empty lists.
pub fn violation(c_values: &[f64]) -> f64 {
    c_values.iter().fold(0.0, |acc, &c| acc.max(c.max(0.0)))
}

type ConstraintFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Ordered list of constraint functions `c_1, ..., c_r`.
///
/// Equality constraints `h(x) = 0` are stored as the pair `h <= 0`,
/// `-h <= 0`, which the adjusted barrier turns into `|h(x)| <= eps_c * sigma`.
#[derive(Default)]
pub struct FeasibleRegion {
    constraints: Vec<ConstraintFn>,
}

impl FeasibleRegion {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `c(x) <= 0`.
    pub fn inequality<F>(mut self, c: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.constraints.push(Box::new(c));
        self
    }

    /// Adds `h(x) = 0` as two inequalities.
    pub fn equality<F>(mut self, h: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + Clone + 'static,
    {
        let neg = h.clone();
        self.constraints.push(Box::new(h));
        self.constraints.push(Box::new(move |x| -neg(x)));
        self
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        self.constraints.iter().map(|c| c(x)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.constraints.iter().all(|c| c(x) <= 0.0)
    }
}

impl fmt::Debug for FeasibleRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeasibleRegion")
            .field("constraints", &self.constraints.len())
            .finish()
    }
}
