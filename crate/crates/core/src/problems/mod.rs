//! Benchmark problems: noisy synthetic functions with exact references and
//! small tabular MDPs for entropy-regularized and cost-constrained policy
//! search.

mod mdp;
mod registry;
mod synthetic;

pub use mdp::{
    chain_mdp, enumerate_return, exact_costs, exact_entropy, exact_return, gridworld_detour_logits,
    gridworld_mdp, optimal_return, policy_gradient, rollout, MdpError, MdpProblem, MdpTask,
    PenaltySign, Rollout, SoftmaxPolicy, TabularMdp, GRID_SIZE, MAX_MODEL_SIZE,
};
pub use registry::{problem_by_name, registry_names, RegistryError, GRID_THRESHOLD};
pub use synthetic::{ConstrainedQuadratic, NoisySphere};

use crate::oracles::NoisyOracle;
use crate::rng::Substream;

/// Objective and constraint oracle plus whatever exact references the
/// problem can provide for auditing.
pub trait ConstrainedProblem: NoisyOracle {
    fn name(&self) -> &str;

    fn dimension(&self) -> usize;

    fn initial_point(&self) -> Vec<f64>;

    /// Expected objective (the mean of the noisy oracle), when computable.
    fn exact_objective(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Expected constraint values, when computable.
    fn exact_constraints(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Optimal objective value, when known in closed form.
    fn known_optimum(&self) -> Option<f64> {
        None
    }

    /// Problem-specific surrogate gradient of the objective, if the problem
    /// has one (policy gradients for MDPs).
    fn surrogate_gradient(&self, _x: &[f64], _rng: &mut Substream) -> Option<Vec<f64>> {
        None
    }
}
