use std::sync::Arc;

use thiserror::Error;

use super::mdp::{chain_mdp, gridworld_detour_logits, gridworld_mdp, MdpProblem, PenaltySign};
use super::synthetic::{ConstrainedQuadratic, NoisySphere};
use super::ConstrainedProblem;

/// Entropy bonus and cost penalty weight used by the MDP benchmarks.
const MDP_MU: f64 = 0.0001;
/// Cost threshold of the gridworld benchmark.
pub const GRID_THRESHOLD: f64 = 30.0;
/// Logit bias of the gridworld starting policy toward the safe detour. The
/// uniform policy wanders through the hazards and is infeasible.
const GRID_START_BIAS: f64 = 2.5;
const SPHERE_NOISE: f64 = 0.1;
const LOW_SPHERE_NOISE: f64 = 0.001;
const QUADRATIC_NOISE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("unknown problem `{0}`; known: {known}", known = registry_names().join(", "))]
    Unknown(String),
}

/// Name patterns accepted by [`problem_by_name`]; `<n>` is a positive
/// dimension.
pub fn registry_names() -> Vec<&'static str> {
    vec![
        "noisy-sphere-<n>",
        "low-noise-sphere-<n>",
        "exact-sphere-<n>",
        "constrained-quadratic-<n>",
        "chain-entropy",
        "grid-cmdp",
    ]
}

fn dimension_suffix(name: &str, prefix: &str) -> Option<usize> {
    name.strip_prefix(prefix)?.parse().ok().filter(|&n| n >= 1)
}

/// Builds a benchmark problem from its registry name.
pub fn problem_by_name(name: &str) -> Result<Arc<dyn ConstrainedProblem>, RegistryError> {
    if let Some(n) = dimension_suffix(name, "noisy-sphere-") {
        return Ok(Arc::new(NoisySphere::new(n, SPHERE_NOISE)));
    }
    if let Some(n) = dimension_suffix(name, "low-noise-sphere-") {
        return Ok(Arc::new(NoisySphere::new(n, LOW_SPHERE_NOISE)));
    }
    if let Some(n) = dimension_suffix(name, "exact-sphere-") {
        return Ok(Arc::new(NoisySphere::new(n, 0.0)));
    }
    if let Some(n) = dimension_suffix(name, "constrained-quadratic-") {
        return Ok(Arc::new(ConstrainedQuadratic::new(n, QUADRATIC_NOISE, 1.0)));
    }
    match name {
        "chain-entropy" => {
            let mdp = chain_mdp();
            let upper = mdp.horizon() as f64 * (mdp.actions() as f64).ln();
            Ok(Arc::new(MdpProblem::entropy(name, mdp, MDP_MU, 0.0, upper)))
        }
        "grid-cmdp" => Ok(Arc::new(
            MdpProblem::cmdp(
                name,
                gridworld_mdp(),
                MDP_MU,
                vec![GRID_THRESHOLD],
                PenaltySign::Penalize,
            )
            .with_initial_point(gridworld_detour_logits(GRID_START_BIAS)),
        )),
        _ => Err(RegistryError::Unknown(name.to_string())),
    }
}
