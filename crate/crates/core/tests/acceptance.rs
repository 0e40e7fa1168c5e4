//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use barrier_es::constraints::{adjusted_barrier, exact_barrier, BarrierValue};
use barrier_es::diagnostics::{expected_decrease_audit, write_trace, LyapunovConfig, TraceRecord};
use barrier_es::engine::RunOutcome;
use barrier_es::guided::{psi_guided, GesDistribution, SurrogateBuffer};
use barrier_es::oracles::ScheduleMode;
use barrier_es::problems::{
    chain_mdp, enumerate_return, exact_costs, exact_entropy, exact_return, gridworld_mdp,
    optimal_return, rollout, SoftmaxPolicy, TabularMdp, GRID_THRESHOLD,
};
use barrier_es::rng::{substream, Purpose};
use barrier_es::suites::{check_accuracy, run_seeds, suite_config, SeedRun};
use nalgebra::DMatrix;
use rand::Rng;

const SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
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

fn timed_suite(name: &str, seeds: &[u64]) -> (Vec<SeedRun>, Duration) {
    let config = suite_config(name).expect("known suite");
    let start = Instant::now();
    let runs = run_seeds(&config, seeds).expect("suite runs");
    (runs, start.elapsed())
}

fn barrier_semantics() -> Verdict {
    let levels = |tol: f64| [-1.0, -1e-12, 0.0, tol, tol + 1e-9, 0.5, 2.0];
    let mut cases = 0usize;
    let mut wrong = Vec::new();
    for eps_c in [0.0, 0.5, 1.0] {
        for sigma in [0.1, 1.0] {
            let tol = eps_c * sigma;
            let vals = levels(tol);
            for m in 0..=3usize {
                for code in 0..vals.len().pow(m as u32) {
                    let mut k = code;
                    let c: Vec<f64> = (0..m)
                        .map(|_| {
                            let v = vals[k % vals.len()];
                            k /= vals.len();
                            v
                        })
                        .collect();
                    let adjusted_ok = c.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) <= tol;
                    let exact_ok = c.iter().all(|&v| v <= 0.0);
                    let got_adj = adjusted_barrier(3.2, &c, eps_c, sigma);
                    let got_exact = exact_barrier(3.2, &c);
                    let expect = |ok: bool| if ok { Some(3.2) } else { None };
                    cases += 1;
                    if got_adj.value() != expect(adjusted_ok)
                        || got_exact.value() != expect(exact_ok)
                    {
                        wrong.push(format!("eps_c={eps_c} sigma={sigma} c={c:?}"));
                    }
                }
            }
        }
    }
    let boundary = adjusted_barrier(1.0, &[0.1], 1.0, 0.1).is_feasible();
    verdict(
        wrong.is_empty() && boundary,
        format!(
            "{cases} sign patterns, {} mismatches, boundary c = eps_c sigma feasible: {boundary}",
            wrong.len()
        ),
    )
}

/// Re-derives every acceptance from the trace alone: a successful row must
/// beat the previous row's estimate by `kappa / 2` times the previous squared
/// step size, up to one unit in the last place; an unsuccessful row must
/// carry the previous estimate unchanged.
fn recheck_decrease(
    outcome: &RunOutcome,
    trace: &[TraceRecord],
    kappa: f64,
) -> (usize, Vec<String>) {
    let mut f_prev = outcome.initial.f_incumbent;
    let mut sigma_prev = outcome.initial.sigma;
    let mut checked = 0;
    let mut bad = Vec::new();
    for r in trace {
        if r.success {
            let threshold = f_prev - 0.5 * kappa * sigma_prev * sigma_prev;
            checked += 1;
            if r.f_est > threshold.next_up() {
                bad.push(format!(
                    "iteration {}: {} > {}",
                    r.iteration, r.f_est, threshold
                ));
            }
        } else if r.f_est.to_bits() != f_prev.to_bits() {
            bad.push(format!(
                "iteration {}: estimate changed without success",
                r.iteration
            ));
        }
        f_prev = r.f_est;
        sigma_prev = r.sigma;
    }
    (checked, bad)
}

fn sufficient_decrease() -> Verdict {
    let plan = [
        ("sphere", 300),
        ("constrained-quadratic", 300),
        ("lyapunov", 60),
        ("chain-entropy", 100),
        ("grid-cmdp", 60),
    ];
    let mut checked = 0;
    let mut bad = Vec::new();
    for (suite, budget) in plan {
        let mut config = suite_config(suite).unwrap();
        config.engine.budget = budget;
        let kappa = config.engine.kappa;
        for run in run_seeds(&config, &[0, 1, 2]).unwrap() {
            let (n, b) = recheck_decrease(&run.outcome, &run.outcome.trace, kappa);
            checked += n;
            bad.extend(
                b.into_iter()
                    .map(|s| format!("{suite} seed {}: {s}", run.seed)),
            );
        }
    }
    verdict(
        bad.is_empty() && checked > 0,
        format!(
            "{checked} successful iterations re-checked, {} violations {:?}",
            bad.len(),
            bad.first()
        ),
    )
}

fn sphere_criteria() -> (Verdict, Verdict) {
    let (runs, elapsed) = timed_suite("sphere", &SEEDS);
    let converged = runs.iter().filter(|r| r.summary.sigma_converged).count();
    let c3 = verdict(
        converged >= 9 && elapsed < Duration::from_secs(120),
        format!(
            "sigma check passed on {converged}/10 seeds in {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
    let initial = runs[0].summary.initial_f_exact.unwrap();
    let finals: Vec<f64> = runs
        .iter()
        .map(|r| r.summary.final_f_exact.unwrap())
        .collect();
    let med = median(finals);
    let c4 = verdict(
        med <= 0.01 * initial,
        format!(
            "median final f {med:.4} vs 0.01 x initial {initial} = {:.4}",
            0.01 * initial
        ),
    );
    (c3, c4)
}

fn constrained_optimum() -> Verdict {
    let (runs, elapsed) = timed_suite("constrained-quadratic", &SEEDS);
    // closest point of the unit ball to (2, 0) is (1, 0), at squared distance 1
    let optimum = (2.0f64 - 1.0).powi(2);
    let mut finals = Vec::new();
    let mut worst_violation = 0.0f64;
    for run in &runs {
        let x = &run.outcome.final_state.x;
        finals.push((x[0] - 2.0).powi(2) + x[1] * x[1]);
        worst_violation = worst_violation.max(x.iter().map(|v| v * v).sum::<f64>() - 1.0);
    }
    let med = median(finals);
    let rel = (med - optimum).abs() / optimum;
    verdict(
        rel <= 0.05 && worst_violation <= 0.0 && elapsed < Duration::from_secs(60),
        format!(
            "median final f {med:.4} ({:.2}% from 1), largest ||x||^2 - 1 = {worst_violation:.2e}, {:.1}s",
            100.0 * rel,
            elapsed.as_secs_f64()
        ),
    )
}

fn lyapunov_decrease() -> Verdict {
    let config = suite_config("lyapunov").unwrap();
    let e = &config.engine;
    let nu = 0.95;
    let symmetric = e.gamma_up == 1.01 && e.gamma_down == 1.0 / 1.01;
    let theory_nu = LyapunovConfig { nu }.theory_valid(e.gamma_up, e.kappa);
    let small_eps =
        config.schedule.mode == ScheduleMode::Theoretical && config.schedule.eps_f < e.kappa / 4.0;
    let runs = run_seeds(&config, &SEEDS).unwrap();
    let traces: Vec<Vec<TraceRecord>> = runs.into_iter().map(|r| r.outcome.trace).collect();
    let report = expected_decrease_audit(&traces, nu, 10).unwrap();
    let frac = report.fraction_non_positive().unwrap_or(0.0);
    verdict(
        symmetric && theory_nu && small_eps && frac >= 0.95,
        format!(
            "{:.1}% of {} buckets non-positive; symmetric {symmetric}, nu valid {theory_nu}, eps_f < kappa/4 {small_eps}",
            100.0 * frac,
            report.buckets.len()
        ),
    )
}

fn accuracy_compliance() -> Verdict {
    let config = suite_config("accuracy").unwrap();
    let report = check_accuracy(&config, 1000, 0).unwrap();
    verdict(
        report.schedule == ScheduleMode::Theoretical
            && report.audited >= 1000
            && report.lower_bound >= report.p,
        format!(
            "{}/{} accurate, 99% lower bound {:.4} vs p = {}",
            report.accurate, report.audited, report.lower_bound, report.p
        ),
    )
}

fn ges_covariance() -> Verdict {
    let (n, m, alpha) = (6usize, 3usize, 0.5);
    let mut rng = substream(99, Purpose::Surrogate, 0, 0);
    let mut buffer = SurrogateBuffer::new(m, n);
    let mut grads = Vec::new();
    for _ in 0..m {
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        grads.push(g.clone());
        buffer.push(g).unwrap();
    }
    // independent basis from a QR factorization of the gradient matrix
    let g = DMatrix::from_fn(n, m, |i, j| grads[j][i]);
    let q = g.qr().q();
    let expected = DMatrix::<f64>::identity(n, n) * (alpha / n as f64)
        + &q * q.transpose() * ((1.0 - alpha) / m as f64);

    let dist = GesDistribution::new(alpha, &buffer);
    let draws = 100_000usize;
    let mut sums = DMatrix::<f64>::zeros(n, n);
    for k in 0..draws {
        let d = dist
            .sample_direction(&mut substream(7, Purpose::Direction, 0, k as u64))
            .unwrap();
        for i in 0..n {
            for j in 0..n {
                sums[(i, j)] += d[i] * d[j];
            }
        }
    }
    let empirical = sums / draws as f64;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let se = ((expected[(i, i)] * expected[(j, j)] + expected[(i, j)].powi(2))
                / draws as f64)
                .sqrt();
            worst = worst.max((empirical[(i, j)] - expected[(i, j)]).abs() / se);
        }
    }
    let trace = dist.covariance_trace();
    let trace_ok = (trace - 1.0).abs() < 1e-15 && (expected.trace() - 1.0).abs() < 1e-12;
    verdict(
        worst <= 5.0 && trace_ok,
        format!("largest entry deviation {worst:.2} SE over 10^5 draws, trace {trace}"),
    )
}

fn antithetic_map() -> Verdict {
    let dirs = vec![vec![1.0, 0.0]];
    let pairs = [(BarrierValue::Finite(0.4), BarrierValue::Finite(0.6))];
    let out = psi_guided(&dirs, &pairs, 1.0, 5.0, 2).unwrap();
    let example_ok = (out[0] - 0.5).abs() <= 1e-12 && out[1].abs() <= 1e-12;

    let mut rng = substream(5, Purpose::Audit, 0, 0);
    let mut broken = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..8usize);
        let l = rng.random_range(1..6usize);
        let dirs: Vec<Vec<f64>> = (0..l)
            .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let vals: Vec<(f64, f64)> = (0..l)
            .map(|_| (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
            .collect();
        let sigma_es = rng.random_range(0.01..3.0);
        let beta = rng.random_range(0.1..10.0);
        let fwd: Vec<_> = vals
            .iter()
            .map(|&(a, b)| (BarrierValue::Finite(a), BarrierValue::Finite(b)))
            .collect();
        let rev: Vec<_> = vals
            .iter()
            .map(|&(a, b)| (BarrierValue::Finite(b), BarrierValue::Finite(a)))
            .collect();
        let p = psi_guided(&dirs, &fwd, sigma_es, beta, 2 * l).unwrap();
        let q = psi_guided(&dirs, &rev, sigma_es, beta, 2 * l).unwrap();
        if p.iter().zip(&q).any(|(a, b)| a != &-b) {
            broken += 1;
        }
    }
    verdict(
        example_ok && broken == 0,
        format!(
            "example gives ({}, {}), antisymmetry broken on {broken}/1000 instances",
            out[0], out[1]
        ),
    )
}

fn two_state_mdp() -> (TabularMdp, SoftmaxPolicy) {
    let transitions = vec![0.7, 0.3, 0.2, 0.8, 0.5, 0.5, 0.9, 0.1];
    let rewards = vec![1.0, 0.0, -0.5, 2.0];
    let mdp = TabularMdp::new(
        2,
        2,
        transitions,
        rewards,
        Vec::new(),
        0.99,
        4,
        vec![0.6, 0.4],
    )
    .unwrap();
    let policy = SoftmaxPolicy::for_mdp(&mdp, &[0.3, -0.2, 1.0, 0.1]).unwrap();
    (mdp, policy)
}

fn rollout_z(mdp: &TabularMdp, policy: &SoftmaxPolicy, seed: u64) -> f64 {
    let n = 100_000usize;
    let mut rng = substream(seed, Purpose::Audit, 0, 0);
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n {
        let r = rollout(mdp, policy, &mut rng).ret;
        sum += r;
        sq += r * r;
    }
    let mean = sum / n as f64;
    let var = (sq / n as f64 - mean * mean) * n as f64 / (n - 1) as f64;
    (mean - exact_return(mdp, policy).unwrap()).abs() / (var / n as f64).sqrt()
}

fn mdp_oracles() -> Verdict {
    let (mdp, policy) = two_state_mdp();
    let exact = exact_return(&mdp, &policy).unwrap();
    let enumerated = enumerate_return(&mdp, &policy).unwrap();
    let gap = (exact - enumerated).abs();
    let z_small = rollout_z(&mdp, &policy, 1);
    let chain = chain_mdp();
    let z_chain = rollout_z(
        &chain,
        &SoftmaxPolicy::uniform(chain.states(), chain.actions()),
        2,
    );
    verdict(
        gap <= 1e-12 && z_small <= 4.0 && z_chain <= 4.0,
        format!(
            "|exact - enumerated| = {gap:.1e}; rollout means at {z_small:.2} and {z_chain:.2} SE"
        ),
    )
}

fn entropy_policy_search() -> Verdict {
    let (runs, elapsed) = timed_suite("chain-entropy", &SEEDS);
    let mdp = chain_mdp();
    let best = optimal_return(&mdp).unwrap();
    let upper = mdp.horizon() as f64 * (mdp.actions() as f64).ln();
    let mut worst_ratio = f64::INFINITY;
    let mut in_bounds = true;
    for run in &runs {
        let policy = SoftmaxPolicy::for_mdp(&mdp, &run.outcome.final_state.x).unwrap();
        let h = exact_entropy(&mdp, &policy).unwrap();
        in_bounds &= (0.0..=upper).contains(&h);
        worst_ratio = worst_ratio.min(exact_return(&mdp, &policy).unwrap() / best);
    }
    verdict(
        in_bounds && worst_ratio >= 0.95 && elapsed < Duration::from_secs(120),
        format!(
            "lowest return {:.1}% of optimum {best:.4}, entropy within [0, {upper:.3}]: {in_bounds}, {:.1}s",
            100.0 * worst_ratio,
            elapsed.as_secs_f64()
        ),
    )
}

fn cmdp_feasibility() -> Verdict {
    let (runs, elapsed) = timed_suite("grid-cmdp", &SEEDS);
    let mdp = gridworld_mdp();
    let costs: Vec<f64> = runs
        .iter()
        .map(|run| {
            let policy = SoftmaxPolicy::for_mdp(&mdp, &run.outcome.final_state.x).unwrap();
            exact_costs(&mdp, &policy).unwrap()[0]
        })
        .collect();
    let feasible = costs.iter().filter(|&&c| c < GRID_THRESHOLD).count();
    let worst = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    verdict(
        feasible == SEEDS.len(),
        format!(
            "{feasible}/10 final policies below cost {GRID_THRESHOLD}, largest expected cost {worst:.3}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn trace_bytes(config: &barrier_es::diagnostics::RunConfig, seed: u64, threads: usize) -> Vec<u8> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    let runs = pool.install(|| run_seeds(config, &[seed]).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_trace(&runs[0].outcome.trace, &path).unwrap();
    std::fs::read(path).unwrap()
}

fn determinism() -> Verdict {
    let mut same = 0;
    let mut total = 0;
    for (suite, budget) in [
        ("sphere", 200),
        ("constrained-quadratic", 200),
        ("chain-entropy", 40),
    ] {
        let mut config = suite_config(suite).unwrap();
        config.engine.budget = budget;
        let a = trace_bytes(&config, 17, 4);
        let b = trace_bytes(&config, 17, 4);
        let c = trace_bytes(&config, 17, 1);
        total += 2;
        same += usize::from(a == b) + usize::from(a == c);
    }
    verdict(
        same == total,
        format!("{same}/{total} trace pairs byte-identical (repeat, and 4 vs 1 threads)"),
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let (c3, c4) = sphere_criteria();
    let results = [
        ("barrier semantics", barrier_semantics()),
        ("sufficient decrease", sufficient_decrease()),
        ("step-size convergence", c3),
        ("optimization quality", c4),
        ("constrained optimum", constrained_optimum()),
        ("Lyapunov decrease", lyapunov_decrease()),
        ("accuracy compliance", accuracy_compliance()),
        ("guided covariance", ges_covariance()),
        ("antithetic map", antithetic_map()),
        ("MDP oracle equivalence", mdp_oracles()),
        ("entropy-constrained policy search", entropy_policy_search()),
        ("CMDP feasibility", cmdp_feasibility()),
        ("determinism", determinism()),
    ];
    let mut failed = 0;
    for (i, (name, v)) in results.iter().enumerate() {
        println!(
            "{} {:>2} {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {}/{} passed in {:.1}s",
        results.len() - failed,
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
