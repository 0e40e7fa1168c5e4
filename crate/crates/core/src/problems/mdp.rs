//! Finite-horizon tabular MDPs, softmax policies, Monte Carlo rollouts and
//! exact backward-induction references.

use rand::Rng;
use thiserror::Error;

use super::ConstrainedProblem;
use crate::oracles::{NoisyOracle, OracleError, Sample};
use crate::rng::Substream;

/// Largest `S * S * A * T` the exact backward-induction routines accept.
pub const MAX_MODEL_SIZE: usize = 50_000_000;

/// Largest number of trajectory branches `(A * S)^T` explored by
/// [`enumerate_return`].
const MAX_ENUMERATION: f64 = 1e7;

/// Side length of the default gridworld.
pub const GRID_SIZE: usize = 4;

const ROW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("invalid MDP: {0}")]
    InvalidModel(String),
    #[error("model size {size} exceeds the limit {limit}")]
    SizeError { size: f64, limit: f64 },
    #[error("expected {expected} policy parameters, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Finite-horizon MDP with `S` states, `A` actions and `r` cost functions.
///
/// Tensors are stored flat: `transitions[(s * A + a) * S + s']`,
/// `rewards[s * A + a]`, `costs[i][s * A + a]`.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    states: usize,
    actions: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
    costs: Vec<Vec<f64>>,
    discount: f64,
    horizon: usize,
    initial: Vec<f64>,
}

impl TabularMdp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        states: usize,
        actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        costs: Vec<Vec<f64>>,
        discount: f64,
        horizon: usize,
        initial: Vec<f64>,
    ) -> Result<Self, MdpError> {
        let bad = |msg: String| Err(MdpError::InvalidModel(msg));
        if states == 0 || actions == 0 {
            return bad("need at least one state and one action".into());
        }
        if transitions.len() != states * actions * states {
            return bad(format!(
                "transition tensor has {} entries, expected {}",
                transitions.len(),
                states * actions * states
            ));
        }
        if rewards.len() != states * actions {
            return bad(format!("reward table has {} entries", rewards.len()));
        }
        if let Some(i) = costs.iter().position(|g| g.len() != states * actions) {
            return bad(format!("cost table {i} has the wrong size"));
        }
        if !(0.0..=1.0).contains(&discount) {
            return bad(format!("discount {discount} outside [0, 1]"));
        }
        if initial.len() != states {
            return bad("initial distribution has the wrong size".into());
        }
        for (row, p) in transitions.chunks(states).enumerate() {
            if p.iter().any(|&q| !(q >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > ROW_TOLERANCE
            {
                return bad(format!(
                    "transition row (s={}, a={}) is not a distribution",
                    row / actions,
                    row % actions
                ));
            }
        }
        if initial.iter().any(|&q| !(q >= 0.0))
            || (initial.iter().sum::<f64>() - 1.0).abs() > ROW_TOLERANCE
        {
            return bad("initial distribution does not sum to 1".into());
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&rewards) || !costs.iter().all(|g| finite(g)) {
            return bad("non-finite reward or cost".into());
        }
        Ok(Self {
            states,
            actions,
            transitions,
            rewards,
            costs,
            discount,
            horizon,
            initial,
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn num_costs(&self) -> usize {
        self.costs.len()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of softmax logits, `S * A`.
    pub fn num_parameters(&self) -> usize {
        self.states * self.actions
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.actions + a]
    }

    pub fn cost(&self, i: usize, s: usize, a: usize) -> f64 {
        self.costs[i][s * self.actions + a]
    }

    pub fn next_distribution(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.actions + a) * self.states;
        &self.transitions[start..start + self.states]
    }

    pub fn initial_distribution(&self) -> &[f64] {
        &self.initial
    }

    /// `sum_{t < T} discount^t`.
    pub fn discounted_horizon(&self) -> f64 {
        (0..self.horizon)
            .map(|t| self.discount.powi(t as i32))
            .sum()
    }

    fn check_exact_size(&self) -> Result<(), MdpError> {
        let size = (self.states as f64)
            * (self.states as f64)
            * (self.actions as f64)
            * (self.horizon as f64);
        if size > MAX_MODEL_SIZE as f64 {
            return Err(MdpError::SizeError {
                size,
                limit: MAX_MODEL_SIZE as f64,
            });
        }
        Ok(())
    }
}

/// Stochastic policy `pi(a | s) = softmax(logits[s, .])(a)`.
#[derive(Debug, Clone)]
pub struct SoftmaxPolicy {
    states: usize,
    actions: usize,
    probs: Vec<f64>,
    entropies: Vec<f64>,
}

impl SoftmaxPolicy {
    /// Builds the policy from `S * A` row-major logits.
    pub fn from_logits(states: usize, actions: usize, logits: &[f64]) -> Result<Self, MdpError> {
        if logits.len() != states * actions {
            return Err(MdpError::DimensionMismatch {
                expected: states * actions,
                got: logits.len(),
            });
        }
        let mut probs = Vec::with_capacity(logits.len());
        let mut entropies = Vec::with_capacity(states);
        for row in logits.chunks(actions) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return Err(MdpError::InvalidModel("non-finite logits".into()));
            }
            let exps: Vec<f64> = row.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            let mut h = 0.0;
            for e in exps {
                let p = e / z;
                if p > 0.0 {
                    h -= p * p.ln();
                }
                probs.push(p);
            }
            entropies.push(h.max(0.0));
        }
        Ok(Self {
            states,
            actions,
            probs,
            entropies,
        })
    }

    pub fn for_mdp(mdp: &TabularMdp, logits: &[f64]) -> Result<Self, MdpError> {
        Self::from_logits(mdp.states, mdp.actions, logits)
    }

    pub fn uniform(states: usize, actions: usize) -> Self {
        Self::from_logits(states, actions, &vec![0.0; states * actions]).expect("finite logits")
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.actions + a]
    }

    pub fn probs(&self, s: usize) -> &[f64] {
        &self.probs[s * self.actions..(s + 1) * self.actions]
    }

    /// Shannon entropy of `pi(. | s)` in nats.
    pub fn entropy(&self, s: usize) -> f64 {
        self.entropies[s]
    }

    pub fn states(&self) -> usize {
        self.states
    }
}

fn draw(dist: &[f64], rng: &mut Substream) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the cumulative sum; take the last non-zero entry
    dist.iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(dist.len() - 1)
}

/// Summary of one simulated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// `sum_t discount^t r_t`.
    pub ret: f64,
    /// `sum_t h(s_t)`, undiscounted.
    pub entropy: f64,
    /// Discounted sum of each cost function.
    pub costs: Vec<f64>,
}

/// Simulates one trajectory of length `T`.
pub fn rollout(mdp: &TabularMdp, policy: &SoftmaxPolicy, rng: &mut Substream) -> Rollout {
    let mut out = Rollout {
        ret: 0.0,
        entropy: 0.0,
        costs: vec![0.0; mdp.costs.len()],
    };
    let mut s = draw(&mdp.initial, rng);
    let mut weight = 1.0;
    for _ in 0..mdp.horizon {
        out.entropy += policy.entropy(s);
        let a = draw(policy.probs(s), rng);
        out.ret += weight * mdp.reward(s, a);
        for (i, c) in out.costs.iter_mut().enumerate() {
            *c += weight * mdp.cost(i, s, a);
        }
        s = draw(mdp.next_distribution(s, a), rng);
        weight *= mdp.discount;
    }
    out
}

/// Backward induction of `E[sum_t w^t step(s_t, a_t)]` under `policy`.
fn policy_value<F>(mdp: &TabularMdp, policy: &SoftmaxPolicy, weight: f64, step: F) -> f64
where
    F: Fn(usize, usize) -> f64,
{
    let (ns, na) = (mdp.states, mdp.actions);
    let mut next = vec![0.0; ns];
    let mut cur = vec![0.0; ns];
    for _ in 0..mdp.horizon {
        for s in 0..ns {
            let mut v = 0.0;
            for a in 0..na {
                let p = policy.prob(s, a);
                if p == 0.0 {
                    continue;
                }
                let cont: f64 = mdp
                    .next_distribution(s, a)
                    .iter()
                    .zip(&next)
                    .map(|(q, w)| q * w)
                    .sum();
                v += p * (step(s, a) + weight * cont);
            }
            cur[s] = v;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    mdp.initial.iter().zip(&next).map(|(q, v)| q * v).sum()
}

fn check_policy(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<(), MdpError> {
    if policy.states != mdp.states || policy.actions != mdp.actions {
        return Err(MdpError::DimensionMismatch {
            expected: mdp.num_parameters(),
            got: policy.states * policy.actions,
        });
    }
    Ok(())
}

/// Exact expected discounted return.
pub fn exact_return(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<f64, MdpError> {
    mdp.check_exact_size()?;
    check_policy(mdp, policy)?;
    Ok(policy_value(mdp, policy, mdp.discount, |s, a| {
        mdp.reward(s, a)
    }))
}

/// Exact expected trajectory entropy `E[sum_t h(s_t)]`.
pub fn exact_entropy(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<f64, MdpError> {
    mdp.check_exact_size()?;
    check_policy(mdp, policy)?;
    Ok(policy_value(mdp, policy, 1.0, |s, _| policy.entropy(s)))
}

/// Exact expected discounted cost of every cost function.
pub fn exact_costs(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<Vec<f64>, MdpError> {
    mdp.check_exact_size()?;
    check_policy(mdp, policy)?;
    Ok((0..mdp.costs.len())
        .map(|i| policy_value(mdp, policy, mdp.discount, |s, a| mdp.cost(i, s, a)))
        .collect())
}

/// Expected return by summing over every (action, next state) sequence.
/// Exponential in the horizon; intended as a reference for small models.
pub fn enumerate_return(mdp: &TabularMdp, policy: &SoftmaxPolicy) -> Result<f64, MdpError> {
    check_policy(mdp, policy)?;
    let branches = ((mdp.states * mdp.actions) as f64).powi(mdp.horizon as i32) * mdp.states as f64;
    if branches > MAX_ENUMERATION {
        return Err(MdpError::SizeError {
            size: branches,
            limit: MAX_ENUMERATION,
        });
    }

    fn walk(
        mdp: &TabularMdp,
        policy: &SoftmaxPolicy,
        s: usize,
        t: usize,
        prob: f64,
        acc: f64,
    ) -> f64 {
        if t == mdp.horizon {
            return prob * acc;
        }
        let w = mdp.discount.powi(t as i32);
        let mut total = 0.0;
        for a in 0..mdp.actions {
            let pa = policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            let acc = acc + w * mdp.reward(s, a);
            for (s2, &q) in mdp.next_distribution(s, a).iter().enumerate() {
                if q > 0.0 {
                    total += walk(mdp, policy, s2, t + 1, prob * pa * q, acc);
                }
            }
        }
        total
    }

    Ok(mdp
        .initial
        .iter()
        .enumerate()
        .filter(|(_, &q)| q > 0.0)
        .map(|(s, &q)| walk(mdp, policy, s, 0, q, 0.0))
        .sum())
}

/// Best achievable expected return over all (possibly non-stationary)
/// policies, by finite-horizon value iteration.
pub fn optimal_return(mdp: &TabularMdp) -> Result<f64, MdpError> {
    mdp.check_exact_size()?;
    let ns = mdp.states;
    let mut next = vec![0.0; ns];
    let mut cur = vec![0.0; ns];
    for _ in 0..mdp.horizon {
        for s in 0..ns {
            cur[s] = (0..mdp.actions)
                .map(|a| {
                    let cont: f64 = mdp
                        .next_distribution(s, a)
                        .iter()
                        .zip(&next)
                        .map(|(q, w)| q * w)
                        .sum();
                    mdp.reward(s, a) + mdp.discount * cont
                })
                .fold(f64::NEG_INFINITY, f64::max);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(mdp.initial.iter().zip(&next).map(|(q, v)| q * v).sum())
}

/// REINFORCE estimate of the gradient of the expected return with respect to
/// the logits, from `episodes` rollouts.
///
/// Uses the undiscounted reward-to-go `G_t = sum_{t' >= t} r_t'` as the
/// advantage target and its per-timestep mean across episodes as baseline.
pub fn policy_gradient(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    episodes: usize,
    rng: &mut Substream,
) -> Vec<f64> {
    let horizon = mdp.horizon;
    let mut paths: Vec<Vec<(usize, usize)>> = Vec::with_capacity(episodes);
    let mut to_go: Vec<Vec<f64>> = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut s = draw(&mdp.initial, rng);
        let mut path = Vec::with_capacity(horizon);
        let mut rewards = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let a = draw(policy.probs(s), rng);
            path.push((s, a));
            rewards.push(mdp.reward(s, a));
            s = draw(mdp.next_distribution(s, a), rng);
        }
        let mut g = vec![0.0; horizon];
        let mut acc = 0.0;
        for t in (0..horizon).rev() {
            acc += rewards[t];
            g[t] = acc;
        }
        paths.push(path);
        to_go.push(g);
    }

    let mut baseline = vec![0.0; horizon];
    for g in &to_go {
        for (b, v) in baseline.iter_mut().zip(g) {
            *b += v;
        }
    }
    let inv = 1.0 / episodes.max(1) as f64;
    baseline.iter_mut().for_each(|b| *b *= inv);

    let na = mdp.actions;
    let mut grad = vec![0.0; mdp.num_parameters()];
    for (path, g) in paths.iter().zip(&to_go) {
        for (t, &(s, a)) in path.iter().enumerate() {
            let adv = g[t] - baseline[t];
            if adv == 0.0 {
                continue;
            }
            // d log pi(a|s) / d logits[s, b] = 1{a = b} - pi(b|s)
            for (b, p) in policy.probs(s).iter().enumerate() {
                let ind = if a == b { 1.0 } else { 0.0 };
                grad[s * na + b] += adv * (ind - p);
            }
        }
    }
    grad.iter_mut().for_each(|g| *g *= inv);
    grad
}

/// Five-state chain. Action 0 moves left, action 1 moves right; the move
/// succeeds with probability 0.9 and goes the other way otherwise (walls
/// clamp). Only the right end pays a reward, one unit per step spent there.
/// Starts at the left end; horizon 20, discount 0.99.
pub fn chain_mdp() -> TabularMdp {
    const S: usize = 5;
    const SLIP: f64 = 0.1;
    let mut transitions = vec![0.0; S * 2 * S];
    let mut rewards = vec![0.0; S * 2];
    for s in 0..S {
        let left = s.saturating_sub(1);
        let right = (s + 1).min(S - 1);
        for a in 0..2 {
            let (go, other) = if a == 0 { (left, right) } else { (right, left) };
            let row = &mut transitions[(s * 2 + a) * S..(s * 2 + a + 1) * S];
            row[go] += 1.0 - SLIP;
            row[other] += SLIP;
        }
    }
    rewards[(S - 1) * 2] = 1.0;
    rewards[(S - 1) * 2 + 1] = 1.0;
    let mut initial = vec![0.0; S];
    initial[0] = 1.0;
    TabularMdp::new(S, 2, transitions, rewards, Vec::new(), 0.99, 20, initial).expect("valid chain")
}

/// Cells of the default gridworld that incur cost.
const HAZARDS: [(usize, usize); 2] = [(0, 1), (0, 2)];
const GRID_START: (usize, usize) = (0, 0);
const GRID_GOAL: (usize, usize) = (0, 3);
const HAZARD_COST: f64 = 20.0;
const GRID_HORIZON: usize = 12;

/// 4x4 gridworld with one cost function. Actions are up, down, left, right;
/// the chosen move happens with probability 0.9, otherwise one of the other
/// three directions is taken uniformly (walls clamp). The goal cell is
/// absorbing and pays one unit per step. Acting from a hazard cell costs
/// `HAZARD_COST`. The direct route from the start to the goal crosses the
/// hazards; the safe route detours through the second row.
pub fn gridworld_mdp() -> TabularMdp {
    const N: usize = GRID_SIZE;
    const S: usize = N * N;
    const A: usize = 4;
    const SLIP: f64 = 0.1;
    let cell = |r: usize, c: usize| r * N + c;
    let step = |r: usize, c: usize, a: usize| -> usize {
        match a {
            0 => cell(r.saturating_sub(1), c),
            1 => cell((r + 1).min(N - 1), c),
            2 => cell(r, c.saturating_sub(1)),
            _ => cell(r, (c + 1).min(N - 1)),
        }
    };
    let goal = cell(GRID_GOAL.0, GRID_GOAL.1);
    let mut transitions = vec![0.0; S * A * S];
    let mut rewards = vec![0.0; S * A];
    let mut costs = vec![0.0; S * A];
    for r in 0..N {
        for c in 0..N {
            let s = cell(r, c);
            let hazard = HAZARDS.contains(&(r, c));
            for a in 0..A {
                let row = &mut transitions[(s * A + a) * S..(s * A + a + 1) * S];
                if s == goal {
                    row[s] = 1.0;
                    rewards[s * A + a] = 1.0;
                    continue;
                }
                for b in 0..A {
                    let p = if a == b {
                        1.0 - SLIP
                    } else {
                        SLIP / (A - 1) as f64
                    };
                    row[step(r, c, b)] += p;
                }
                if hazard {
                    costs[s * A + a] = HAZARD_COST;
                }
            }
        }
    }
    let mut initial = vec![0.0; S];
    initial[cell(GRID_START.0, GRID_START.1)] = 1.0;
    TabularMdp::new(
        S,
        A,
        transitions,
        rewards,
        vec![costs],
        0.99,
        GRID_HORIZON,
        initial,
    )
    .expect("valid grid")
}

/// Logits of the default gridworld that add `bias` to the action of the safe
/// detour (down from the start, right along the second row, up into the goal)
/// in every cell. Other cells prefer moving up or right.
pub fn gridworld_detour_logits(bias: f64) -> Vec<f64> {
    const N: usize = GRID_SIZE;
    let mut x = vec![0.0; N * N * 4];
    for r in 0..N {
        for c in 0..N {
            let a = match (r, c) {
                (0, 0) => 1,
                (0, _) => 3,
                (1, col) if col == N - 1 => 0,
                (1, _) => 3,
                _ => 0,
            };
            x[(r * N + c) * 4 + a] = bias;
        }
    }
    x
}

/// Sign of the cost penalty in the CMDP objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltySign {
    /// `-E[R] + mu * sum_i E[g_i]`: costs worsen the minimized objective.
    Penalize,
    /// `-E[R] - mu * sum_i E[g_i]`.
    Reward,
}

impl PenaltySign {
    fn factor(self) -> f64 {
        match self {
            PenaltySign::Penalize => 1.0,
            PenaltySign::Reward => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MdpTask {
    /// Minimize `-E[R] - mu E[H]` subject to `h_l <= E[H] <= h_u`.
    Entropy { mu: f64, h_lower: f64, h_upper: f64 },
    /// Minimize `-E[R] +/- mu sum_i E[g_i]` subject to `E[g_i] <= t_i`.
    Cmdp {
        mu: f64,
        thresholds: Vec<f64>,
        sign: PenaltySign,
    },
}

/// Policy search over softmax logits on a tabular MDP. Every oracle draw is
/// one rollout.
#[derive(Debug, Clone)]
pub struct MdpProblem {
    name: String,
    mdp: TabularMdp,
    task: MdpTask,
    x0: Vec<f64>,
    gradient_episodes: usize,
}

impl MdpProblem {
    pub fn entropy(name: &str, mdp: TabularMdp, mu: f64, h_lower: f64, h_upper: f64) -> Self {
        assert!(h_lower <= h_upper, "entropy bounds out of order");
        assert!(mu >= 0.0, "mu must be non-negative");
        Self::with_task(
            name,
            mdp,
            MdpTask::Entropy {
                mu,
                h_lower,
                h_upper,
            },
        )
    }

    pub fn cmdp(
        name: &str,
        mdp: TabularMdp,
        mu: f64,
        thresholds: Vec<f64>,
        sign: PenaltySign,
    ) -> Self {
        assert_eq!(
            thresholds.len(),
            mdp.num_costs(),
            "one threshold per cost function"
        );
        Self::with_task(
            name,
            mdp,
            MdpTask::Cmdp {
                mu,
                thresholds,
                sign,
            },
        )
    }

    fn with_task(name: &str, mdp: TabularMdp, task: MdpTask) -> Self {
        let x0 = vec![0.0; mdp.num_parameters()];
        Self {
            name: name.to_string(),
            mdp,
            task,
            x0,
            gradient_episodes: 16,
        }
    }

    pub fn with_initial_point(mut self, x0: Vec<f64>) -> Self {
        assert_eq!(x0.len(), self.mdp.num_parameters());
        self.x0 = x0;
        self
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn task(&self) -> &MdpTask {
        &self.task
    }

    pub fn policy(&self, x: &[f64]) -> Result<SoftmaxPolicy, MdpError> {
        SoftmaxPolicy::for_mdp(&self.mdp, x)
    }

    fn objective_of(&self, ret: f64, entropy: f64, costs: &[f64]) -> f64 {
        match &self.task {
            MdpTask::Entropy { mu, .. } => -ret - mu * entropy,
            MdpTask::Cmdp { mu, sign, .. } => -ret + sign.factor() * mu * costs.iter().sum::<f64>(),
        }
    }

    fn constraints_of(&self, entropy: f64, costs: &[f64]) -> Vec<f64> {
        match &self.task {
            MdpTask::Entropy {
                h_lower, h_upper, ..
            } => vec![h_lower - entropy, entropy - h_upper],
            MdpTask::Cmdp { thresholds, .. } => {
                costs.iter().zip(thresholds).map(|(g, t)| g - t).collect()
            }
        }
    }

    fn objective_range(&self) -> f64 {
        let span = |v: &[f64]| {
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            hi - lo
        };
        let d = self.mdp.discounted_horizon();
        let mut width = d * span(&self.mdp.rewards);
        match &self.task {
            MdpTask::Entropy { mu, .. } => {
                width += mu * self.mdp.horizon as f64 * (self.mdp.actions as f64).ln();
            }
            MdpTask::Cmdp { mu, .. } => {
                width += mu * self.mdp.costs.iter().map(|g| d * span(g)).sum::<f64>();
            }
        }
        width
    }
}

impl NoisyOracle for MdpProblem {
    fn num_constraints(&self) -> usize {
        match &self.task {
            MdpTask::Entropy { .. } => 2,
            MdpTask::Cmdp { thresholds, .. } => thresholds.len(),
        }
    }

    fn sample(&self, x: &[f64], rng: &mut Substream) -> Result<Sample, OracleError> {
        let policy = self
            .policy(x)
            .map_err(|e| OracleError::Domain(e.to_string()))?;
        let r = rollout(&self.mdp, &policy, rng);
        Ok(Sample {
            f: self.objective_of(r.ret, r.entropy, &r.costs),
            c: self.constraints_of(r.entropy, &r.costs),
        })
    }

    /// Popoviciu's bound on a variable confined to an interval of the
    /// objective's width.
    fn variance_bound(&self) -> Option<f64> {
        let w = self.objective_range();
        Some(w * w / 4.0)
    }
}

impl ConstrainedProblem for MdpProblem {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.mdp.num_parameters()
    }

    fn initial_point(&self) -> Vec<f64> {
        self.x0.clone()
    }

    fn exact_objective(&self, x: &[f64]) -> Option<f64> {
        let policy = self.policy(x).ok()?;
        let ret = exact_return(&self.mdp, &policy).ok()?;
        let entropy = exact_entropy(&self.mdp, &policy).ok()?;
        let costs = exact_costs(&self.mdp, &policy).ok()?;
        Some(self.objective_of(ret, entropy, &costs))
    }

    fn exact_constraints(&self, x: &[f64]) -> Option<Vec<f64>> {
        let policy = self.policy(x).ok()?;
        let entropy = exact_entropy(&self.mdp, &policy).ok()?;
        let costs = exact_costs(&self.mdp, &policy).ok()?;
        Some(self.constraints_of(entropy, &costs))
    }

    /// Gradient of `-E[R]` from REINFORCE rollouts.
    fn surrogate_gradient(&self, x: &[f64], rng: &mut Substream) -> Option<Vec<f64>> {
        let policy = self.policy(x).ok()?;
        let g = policy_gradient(&self.mdp, &policy, self.gradient_episodes, rng);
        Some(g.into_iter().map(|v| -v).collect())
    }
}
