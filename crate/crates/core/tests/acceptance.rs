//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use rcvar_core::json;
use rcvar_core::mdp::{build_gridworld, save_mdp, AmbiguitySpec, Budget, BudgetField, GridSpec, Mdp};
use rcvar_core::riskcore::{cvar, cvar_dual, evar, ncvar, rn_reduction, BudgetVector};
use rcvar_core::rollout::{rollout, sample_kernel, Kernel, RolloutConfig};
use rcvar_core::solver::{
    check_concavity, inner_max, make_ygrid, save_result_csv, value_at, value_iteration, value_iteration_from,
    BellmanOperator, Curve, EnvelopeProblem, EnvelopeTerm, GreedyPolicy, SolveOptions, SolveResult, SolveSummary,
    ValueFunction,
};

const ALPHA: f64 = 0.48;
const N_NODES: usize = 21;
const Y_MIN: f64 = 1e-4;
const BUDGET_SEED: u64 = 7;
const KERNEL_SEED_BASE: u64 = 1000;
const N_KERNELS: u64 = 20;
const EPISODES: usize = 10_000;
const HORIZON: usize = 400;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let value = rn_reduction(0.48, 2.0).unwrap();
    let elapsed = start.elapsed();
    verdict(
        value == 0.24 && elapsed < Duration::from_millis(1),
        format!("rn_reduction(0.48, 2) = {value:?} in {:?}", elapsed),
    )
}

struct RiskInstance {
    dist: rcvar_core::DiscreteDistribution,
    alpha: f64,
    kappa: f64,
}

fn risk_instances() -> Vec<RiskInstance> {
    let mut rng = rng(2);
    (0..500)
        .map(|_| RiskInstance {
            dist: random_distribution(&mut rng, 12),
            alpha: 1.0 - rng.gen::<f64>(),
            kappa: rng.gen_range(1.0..=4.0),
        })
        .collect()
}

fn criterion_2(instances: &[RiskInstance]) -> Verdict {
    let start = Instant::now();
    let (mut worst_nc, mut worst_dual) = (0.0f64, 0.0f64);
    for inst in instances {
        let budget = BudgetVector::constant(inst.kappa, inst.dist.len()).unwrap();
        let nc = ncvar(&inst.dist, inst.alpha, &budget).unwrap().value;
        let shifted = cvar(&inst.dist, inst.alpha / inst.kappa).unwrap();
        let primal = cvar(&inst.dist, inst.alpha).unwrap();
        let dual = cvar_dual(&inst.dist, inst.alpha).unwrap().value;
        worst_nc = worst_nc.max((nc - shifted).abs());
        worst_dual = worst_dual.max((primal - dual).abs());
    }
    let elapsed = start.elapsed();
    verdict(
        worst_nc <= 1e-9 && worst_dual <= 1e-9 && elapsed < Duration::from_secs(5),
        format!(
            "500 instances: max |ncvar - cvar(a/k)| = {worst_nc:.1e}, max |cvar - dual| = {worst_dual:.1e}, {}",
            secs(elapsed)
        ),
    )
}

fn criterion_3(instances: &[RiskInstance]) -> Verdict {
    let mut slack = f64::INFINITY;
    for inst in instances {
        let d = &inst.dist;
        let c = cvar(d, inst.alpha).unwrap();
        let e = evar(d, inst.alpha).unwrap();
        slack = slack.min(c - d.mean()).min(e - c).min(d.ess_sup() - e);
    }
    verdict(slack >= -1e-7, format!("min slack of mean <= CVaR <= EVaR <= max over 500 instances: {slack:.2e}"))
}

fn criterion_4() -> Verdict {
    let mut rng = rng(4);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let tree = random_tree(&mut rng);
        let alpha = 1.0 - rng.gen::<f64>();
        let curves: Vec<(Vec<f64>, Vec<f64>)> = (0..tree.probs.len()).map(|j| tree.leaf_curve(j)).collect();
        let problem = EnvelopeProblem {
            y: alpha,
            budget: tree.kappa,
            terms: curves
                .iter()
                .zip(&tree.probs)
                .enumerate()
                .map(|(j, ((k, v), &prob))| EnvelopeTerm { state: j, prob, curve: Curve::new(k, v).unwrap() })
                .collect(),
        };
        let decomposed = tree.root_cost + tree.gamma * inner_max(&problem).unwrap().value;
        let total = tree.total();
        let direct = ncvar(&total, alpha, &BudgetVector::constant(tree.kappa, total.len()).unwrap()).unwrap().value;
        worst = worst.max((decomposed - direct).abs());
    }
    verdict(worst <= 1e-9, format!("200 two-stage trees: max |decomposed - direct| = {worst:.1e}"))
}

fn criterion_5() -> Verdict {
    let mut rng = rng(5);
    let mut worst = 0.0f64;
    let mut fallbacks = 0;
    for _ in 0..200 {
        let env = random_envelope(&mut rng);
        let sol = inner_max(&env.problem()).unwrap();
        fallbacks += sol.expectation_fallback as usize;
        let per_axis = if env.probs.len() == 3 { 100 } else { 10_000 };
        worst = worst.max((sol.value - brute_force_envelope(&env, per_axis)).abs());
    }
    verdict(
        worst <= 1e-6,
        format!("200 envelopes ({fallbacks} beyond budget): max |greedy - brute force| = {worst:.1e}"),
    )
}

fn criterion_6() -> Verdict {
    let start = Instant::now();
    let mut rng = rng(6);
    let g = make_ygrid(N_NODES, Y_MIN, 1.0).unwrap();
    let opts = SolveOptions { epsilon: 1e-10, ..SolveOptions::default() };
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let mdp = random_mdp(&mut rng, 5, 0.9);
        let res = value_iteration(&mdp, &Budget::Constant(1.0), &g, &opts).unwrap();
        let rn = risk_neutral_vi(&mdp, 1e-13);
        for (x, v) in rn.iter().enumerate() {
            worst = worst.max((res.value(x, N_NODES - 1) - v).abs());
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= 1e-6 && elapsed < Duration::from_secs(30),
        format!("50 MDPs: max |V*(x, 1) - risk-neutral V(x)| = {worst:.1e}, {}", secs(elapsed)),
    )
}

fn criterion_7(grid: &Mdp) -> Verdict {
    let mut rng = rng(7);
    let mut worst_ratio = f64::NEG_INFINITY;
    let mut monotone = true;
    for pair in 0..100 {
        let gamma = rng.gen_range(0.1..0.99);
        let mdp = random_mdp(&mut rng, 5, gamma);
        let (budget, k_max) = if pair % 2 == 0 {
            let k = rng.gen_range(1.0..3.0);
            (Budget::Constant(k), k)
        } else {
            let kappa = mdp.states.iter().map(|a| a.iter().map(|_| rng.gen_range(1.0..=2.0)).collect()).collect();
            (Budget::Field { kappa, k_max: 2.0 }, 2.0)
        };
        let g = make_ygrid(9, 0.01, f64::max(k_max, 1.0)).unwrap();
        let op = BellmanOperator::new(&mdp, &budget, &g).unwrap();
        let random = |rng: &mut rand_chacha::ChaCha8Rng| {
            ValueFunction::from_rows((0..5).map(|_| (0..g.len()).map(|_| rng.gen_range(-10.0..10.0)).collect()).collect())
                .unwrap()
        };
        let v1 = random(&mut rng);
        let v2 = random(&mut rng);
        let (t1, t2) = (op.apply(&v1).unwrap(), op.apply(&v2).unwrap());
        let ratio = (t1.sup_distance(&t2) - 1e-9) / v1.sup_distance(&v2);
        worst_ratio = worst_ratio.max(ratio - gamma);
        // Monotonicity: raise v1 pointwise.
        let upper = ValueFunction::from_rows(
            (0..5).map(|x| v1.row(x).iter().map(|v| v + rng.gen_range(0.0..1.0)).collect()).collect(),
        )
        .unwrap();
        let tu = op.apply(&upper).unwrap();
        monotone &= t1.as_slice().iter().zip(tu.as_slice()).all(|(a, b)| a <= b);
    }
    // Concavity after every sweep from V_0 = 0: random constant-budget MDPs
    // and the full grid world with K = 2.
    let mut violations = 0;
    let mut sweeps = 0;
    for _ in 0..20 {
        let mdp = random_mdp(&mut rng, 5, 0.9);
        let k = rng.gen_range(1.0..3.0);
        let budget = Budget::Constant(k);
        let g = make_ygrid(N_NODES, Y_MIN, f64::max(k, 1.0)).unwrap();
        let op = BellmanOperator::new(&mdp, &budget, &g).unwrap();
        let mut v = ValueFunction::zeros(5, g.len());
        for _ in 0..100 {
            v = op.apply(&v).unwrap();
            violations += check_concavity(&v, &g).len();
            sweeps += 1;
        }
    }
    let budget = Budget::Constant(2.0);
    let g = make_ygrid(N_NODES, Y_MIN, 2.0).unwrap();
    let op = BellmanOperator::new(grid, &budget, &g).unwrap();
    let mut v = ValueFunction::zeros(grid.n_states(), g.len());
    loop {
        let next = op.apply(&v).unwrap();
        violations += check_concavity(&next, &g).len();
        sweeps += 1;
        let res = next.sup_distance(&v);
        v = next;
        if res < 1e-6 {
            break;
        }
    }
    verdict(
        worst_ratio <= 1e-9 && monotone && violations == 0,
        format!(
            "100 pairs: max (ratio - gamma) = {worst_ratio:.1e}, monotone = {monotone}; \
             {violations} concavity violations over {sweeps} sweeps"
        ),
    )
}

struct Solved {
    label: &'static str,
    budget: Budget,
    result: SolveResult,
    elapsed: Duration,
}

fn ambiguities() -> [(&'static str, AmbiguitySpec); 3] {
    [
        ("nominal", AmbiguitySpec::None),
        ("rn_k2", AmbiguitySpec::RnFixed { k: 2.0 }),
        (
            "decision_dependent",
            AmbiguitySpec::RnDecisionDependent {
                budget: BudgetField::Uniform { low: 1.0, high: 2.0, seed: BUDGET_SEED },
                k_max: Some(2.0),
            },
        ),
    ]
}

struct RolloutCheck {
    worst_gap: f64,
    failures: Vec<u64>,
    elapsed: Duration,
}

/// Criteria 9 and 10, writing every artifact into `dir`.
fn run_full_scale(grid: &Mdp, dir: &Path) -> (Vec<Solved>, RolloutCheck) {
    std::fs::create_dir_all(dir).unwrap();
    save_mdp(grid, dir.join("mdp.json")).unwrap();
    let opts = SolveOptions::default();
    let mut solved = Vec::new();
    for (label, amb) in ambiguities() {
        let budget = amb.resolve(grid).unwrap();
        let g = make_ygrid(N_NODES, Y_MIN, budget.y_max()).unwrap();
        let start = Instant::now();
        let result = value_iteration(grid, &budget, &g, &opts).unwrap();
        let elapsed = start.elapsed();
        save_result_csv(dir.join(format!("{label}.csv")), &result, grid).unwrap();
        let echo = serde_json::to_value(&amb).unwrap();
        json::write_file(dir.join(format!("{label}.json")), &SolveSummary::new(&result, &opts, echo)).unwrap();
        solved.push(Solved { label, budget, result, elapsed });
    }

    let robust = &solved[1];
    let amb = AmbiguitySpec::RnFixed { k: 2.0 };
    let policy = GreedyPolicy::new(grid, &robust.budget, &robust.result).unwrap();
    let bound = value_at(&robust.result.v_star, &robust.result.ygrid, grid.start_state, ALPHA).unwrap();
    let start = Instant::now();
    let mut worst_gap = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for k in 0..N_KERNELS {
        let kernel = Kernel::Sampled(sample_kernel(grid, &amb, KERNEL_SEED_BASE + k).unwrap());
        let cfg = RolloutConfig { alpha: ALPHA, horizon: HORIZON, n_episodes: EPISODES, seed: k, ..Default::default() };
        let report = rollout(&kernel, &policy, &cfg).unwrap();
        json::write_file(dir.join(format!("rollout_{k:02}.json")), &report).unwrap();
        let gap = report.empirical_cvar_alpha - (bound + 3.0 * report.cvar_std_error);
        worst_gap = worst_gap.max(gap);
        if gap > 0.0 {
            failures.push(KERNEL_SEED_BASE + k);
        }
    }
    (solved, RolloutCheck { worst_gap, failures, elapsed: start.elapsed() })
}

fn criterion_8(grid: &Mdp, from_zero: &Solved) -> Verdict {
    let eps = SolveOptions::default().epsilon;
    let top = grid.cost_bound() / (1.0 - grid.gamma);
    let v0 = ValueFunction::constant(grid.n_states(), N_NODES, top);
    let g = &from_zero.result.ygrid;
    let high = value_iteration_from(grid, &from_zero.budget, g, &SolveOptions::default(), v0).unwrap();
    let gap = high.v_star.sup_distance(&from_zero.result.v_star);
    let limit = 2.0 * eps / (1.0 - grid.gamma);
    verdict(
        gap <= limit && high.converged,
        format!("K = 2 grid world from 0 and from {top}: sup gap {gap:.2e} <= {limit:.1e}"),
    )
}

fn criterion_9(grid: &Mdp, solved: &[Solved]) -> Verdict {
    let total: Duration = solved.iter().map(|s| s.elapsed).sum();
    let value = |s: &Solved| value_at(&s.result.v_star, &s.result.ygrid, grid.start_state, ALPHA).unwrap();
    let (a, b, c) = (value(&solved[0]), value(&solved[1]), value(&solved[2]));
    let converged = solved.iter().all(|s| s.result.converged);
    let runs: Vec<String> = solved
        .iter()
        .map(|s| format!("{} {} sweeps {}", s.label, s.result.iterations, secs(s.elapsed)))
        .collect();
    verdict(
        converged && total < Duration::from_secs(600) && b >= a && c >= a,
        format!(
            "V*(x0, 0.48): nominal {a:.6}, K=2 {b:.6}, kappa in [1,2] {c:.6}; {}; total {}",
            runs.join(", "),
            secs(total)
        ),
    )
}

fn criterion_10(check: &RolloutCheck) -> Verdict {
    verdict(
        check.failures.is_empty() && check.elapsed < Duration::from_secs(300),
        format!(
            "{N_KERNELS} kernels x {EPISODES} episodes: max (CVaR - bound - 3 SE) = {:.4}, failing seeds {:?}, {}",
            check.worst_gap,
            check.failures,
            secs(check.elapsed)
        ),
    )
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    out.sort();
    out
}

fn criterion_11(grid: &Mdp, first: &Path, second: &Path) -> Verdict {
    run_full_scale(grid, second);
    let (a, b) = (files(first), files(second));
    let names = |v: &[PathBuf]| v.iter().map(|p| p.file_name().unwrap().to_owned()).collect::<Vec<_>>();
    if names(&a) != names(&b) {
        return verdict(false, "the two runs wrote different file sets");
    }
    let differing: Vec<String> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| std::fs::read(x).unwrap() != std::fs::read(y).unwrap())
        .map(|(x, _)| x.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    verdict(differing.is_empty(), format!("{} files compared, differing: {differing:?}", a.len()))
}

fn main() {
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut report = |id: usize, name: &'static str, v: Verdict| {
        println!("{} [{id:>2}] {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, name, v));
    };

    report(1, "reduction exactness", criterion_1());
    let instances = risk_instances();
    report(2, "risk-measure identities", criterion_2(&instances));
    report(3, "coherent ordering", criterion_3(&instances));
    report(4, "decomposition", criterion_4());
    report(5, "inner_max oracle", criterion_5());
    report(6, "risk-neutral collapse", criterion_6());

    let grid = build_gridworld(&GridSpec::default()).unwrap();
    report(7, "operator properties", criterion_7(&grid));

    let scratch = tempfile::tempdir().unwrap();
    let first = scratch.path().join("run1");
    let (solved, rollouts) = run_full_scale(&grid, &first);
    report(8, "fixed-point uniqueness", criterion_8(&grid, &solved[1]));
    report(9, "full-scale grid world", criterion_9(&grid, &solved));
    report(10, "Monte-Carlo upper bound", criterion_10(&rollouts));
    report(11, "determinism", criterion_11(&grid, &first, &scratch.path().join("run2")));

    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("{} of {} acceptance criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
