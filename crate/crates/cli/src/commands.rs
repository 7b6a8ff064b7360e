//! The five subcommands. Each reads its inputs from the configuration and the
//! output directory and writes its artifacts back into that directory.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use rcvar_core::json;
use rcvar_core::mdp::{build_gridworld, load_mdp, save_mdp, AmbiguitySpec, Budget, GridLayout, Mdp};
use rcvar_core::riskcore::{kl_reduction, rn_reduction};
use rcvar_core::rollout::{rollout, sample_kernel, write_samples, Kernel, RolloutConfig, RolloutReport};
use rcvar_core::solver::{
    load_result_csv, make_ygrid, result_from_values, save_result_csv, value_at, value_iteration, GreedyPolicy, SolveResult,
    SolveSummary,
};
use rcvar_core::Error;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::image::{greedy_path, obstacle_map, Gray};

pub const MDP_FILE: &str = "mdp.json";
pub const OBSTACLE_FILE: &str = "obstacles.pgm";
pub const RESULT_FILE: &str = "result.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMING_FILE: &str = "timing.json";
pub const HEATMAP_FILE: &str = "value.pgm";
pub const PATH_IMAGE_FILE: &str = "path.ppm";
pub const PATH_FILE: &str = "path.txt";
pub const ROLLOUT_FILE: &str = "rollout.json";

/// Whether a command finished cleanly or left a non-converged result behind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    NotConverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReductionKind {
    /// Radon-Nikodym ratio bound `P~/P <= K`.
    Rn,
    /// KL ball of radius `ln kappa`.
    Kl,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_with<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write(&mut out).and_then(|_| std::io::Write::flush(&mut out)).with_context(|| format!("writing {}", path.display()))
}

fn grid_layout(mdp: &Mdp) -> Result<&GridLayout> {
    mdp.layout.as_ref().ok_or_else(|| Error::Unsupported("the MDP has no grid layout to draw".into()).into())
}

pub fn build_env(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome> {
    let mdp = build_gridworld(&cfg.grid)?;
    create_dir(dir)?;
    save_mdp(&mdp, dir.join(MDP_FILE)).context("writing the MDP")?;
    let layout = grid_layout(&mdp)?;
    write_with(&dir.join(OBSTACLE_FILE), |out| obstacle_map(layout).write_pgm(out))?;
    println!(
        "built {}x{} grid world: {} states, {} obstacles -> {}",
        layout.rows,
        layout.cols,
        mdp.n_states(),
        layout.obstacles.len(),
        dir.join(MDP_FILE).display()
    );
    Ok(Outcome::Done)
}

pub fn reduce(alpha: f64, budget: f64, kind: ReductionKind) -> Result<Outcome> {
    match kind {
        ReductionKind::Rn => {
            let reduced = rn_reduction(alpha, budget)?;
            println!("alpha' = {reduced}");
            println!("solver: CVaR at alpha' via NCVaR value iteration with constant budget kappa = {budget}");
        }
        ReductionKind::Kl => {
            let reduced = kl_reduction(alpha, budget)?;
            println!("alpha' = {reduced}");
            println!("solver: EVaR at alpha' (external; not solved by this tool)");
            eprintln!(
                "warning: alpha' = alpha * kappa^(-1/alpha) = {reduced}; the published experiment quotes 0.03 \
                 for (0.48, 2), which this formula does not reproduce"
            );
        }
    }
    Ok(Outcome::Done)
}

/// Wall-clock time of a solve, kept apart from the deterministic summary.
#[derive(Debug, Serialize)]
struct Timing {
    wall_seconds: f64,
    threads: usize,
}

pub fn solve(cfg: &ExperimentConfig, dir: &Path, mdp_path: Option<&Path>) -> Result<Outcome> {
    let mdp = match mdp_path {
        Some(path) => load_mdp(path).with_context(|| format!("loading {}", path.display()))?,
        None => build_gridworld(&cfg.grid)?,
    };
    mdp.check()?;
    let budget = cfg.ambiguity.resolve(&mdp)?;
    let ygrid = make_ygrid(cfg.ygrid.n, cfg.ygrid.y_min, budget.y_max())?;
    let start = Instant::now();
    let result = value_iteration(&mdp, &budget, &ygrid, &cfg.solver)?;
    let wall_seconds = start.elapsed().as_secs_f64();

    create_dir(dir)?;
    save_mdp(&mdp, dir.join(MDP_FILE)).context("writing the MDP")?;
    save_result_csv(dir.join(RESULT_FILE), &result, &mdp).context("writing the result table")?;
    let summary = SolveSummary::new(&result, &cfg.solver, serde_json::to_value(cfg)?);
    json::write_file(dir.join(SUMMARY_FILE), &summary).context("writing the summary")?;
    let timing = Timing { wall_seconds, threads: rayon::current_num_threads() };
    json::write_file(dir.join(TIMING_FILE), &timing).context("writing the timing")?;

    let v0 = value_at(&result.v_star, &result.ygrid, mdp.start_state, cfg.alpha)?;
    println!("iterations: {}", result.iterations);
    println!("residual: {:e}", result.final_residual);
    println!("V*(start, {}) = {v0}", cfg.alpha);
    if result.concavity_violations > 0 {
        eprintln!("note: {} nodes where y V(x, y) bends upward", result.concavity_violations);
    }
    if result.converged {
        Ok(Outcome::Done)
    } else {
        eprintln!(
            "error: no convergence within {} sweeps (residual {:e}); artifacts written to {}",
            cfg.solver.max_sweeps,
            result.final_residual,
            dir.display()
        );
        Ok(Outcome::NotConverged)
    }
}

/// A solved result read back from an output directory.
pub struct Solved {
    pub mdp: Mdp,
    pub budget: Budget,
    pub ambiguity: AmbiguitySpec,
    pub result: SolveResult,
    /// The configuration echoed into the summary, when it parses.
    pub config: Option<ExperimentConfig>,
}

pub fn load_solved(dir: &Path) -> Result<Solved> {
    let path = |name: &str| -> PathBuf { dir.join(name) };
    let mdp = load_mdp(path(MDP_FILE)).with_context(|| format!("loading {}", path(MDP_FILE).display()))?;
    let summary: SolveSummary =
        json::read_file(path(SUMMARY_FILE)).with_context(|| format!("loading {}", path(SUMMARY_FILE).display()))?;
    let config: Option<ExperimentConfig> = serde_json::from_value(summary.config.clone()).ok();
    let ambiguity = config.as_ref().map(|c| c.ambiguity.clone()).unwrap_or_default();
    let budget = ambiguity.resolve(&mdp)?;
    let table = load_result_csv(path(RESULT_FILE), &summary.ygrid)
        .with_context(|| format!("loading {}", path(RESULT_FILE).display()))?;
    let result = result_from_values(&mdp, &budget, &summary.ygrid, table.values)?;
    Ok(Solved { mdp, budget, ambiguity, result, config })
}

pub fn render(solved: &Solved, alpha: f64, dir: &Path) -> Result<Outcome> {
    let mdp = &solved.mdp;
    let layout = grid_layout(mdp)?;
    let cells = layout.rows * layout.cols;
    let values = (0..cells)
        .map(|x| value_at(&solved.result.v_star, &solved.result.ygrid, x, alpha))
        .collect::<rcvar_core::Result<Vec<f64>>>()?;
    let heat = Gray::heatmap(layout.cols, layout.rows, &values);
    write_with(&dir.join(HEATMAP_FILE), |out| heat.write_pgm(out))?;

    let policy = GreedyPolicy::new(mdp, &solved.budget, &solved.result)?;
    let path = greedy_path(&policy, layout, alpha, cells * solved.result.ygrid.len())?;
    let mut marked = vec![false; cells];
    for &cell in &path {
        marked[layout.state_of(cell)] = true;
    }
    write_with(&dir.join(PATH_IMAGE_FILE), |out| heat.write_ppm_marked(out, &marked))?;
    write_with(&dir.join(PATH_FILE), |out| {
        use std::io::Write;
        path.iter().try_for_each(|[r, c]| writeln!(out, "{r} {c}"))
    })?;

    let reached = path.last() == Some(&layout.goal);
    println!(
        "path: {} cells from {:?} to {:?}{}",
        path.len(),
        layout.start,
        path.last().copied().unwrap_or(layout.start),
        if reached { "" } else { " (goal not reached)" }
    );
    println!("wrote {}, {}, {}", HEATMAP_FILE, PATH_IMAGE_FILE, PATH_FILE);
    Ok(Outcome::Done)
}

/// Everything `evaluate` writes: the bound being checked and one report per kernel.
#[derive(Debug, Serialize)]
struct Evaluation {
    alpha: f64,
    bound: f64,
    /// Sampled kernels whose empirical CVaR stays within three standard errors of the bound.
    sampled_within_bound: usize,
    sampled_total: usize,
    reports: Vec<RolloutReport>,
}

pub fn evaluate(solved: &Solved, cfg: &ExperimentConfig, dir: &Path, samples: bool) -> Result<Outcome> {
    if matches!(solved.ambiguity, AmbiguitySpec::KlFixed { .. }) {
        return Err(Error::Unsupported("evaluation needs a ratio-bounded ambiguity set".into()).into());
    }
    let mdp = &solved.mdp;
    let policy = GreedyPolicy::new(mdp, &solved.budget, &solved.result)?;
    let settings = &cfg.rollout;
    let rc = RolloutConfig {
        start: None,
        alpha: cfg.alpha,
        horizon: settings.horizon,
        n_episodes: settings.episodes,
        seed: settings.seed,
        bootstrap: settings.bootstrap,
    };
    let bound = value_at(&solved.result.v_star, &solved.result.ygrid, mdp.start_state, cfg.alpha)?;

    let mut kernels = vec![("nominal".to_string(), Kernel::Nominal)];
    for k in 0..settings.kernels {
        let seed = settings.kernel_seed + k;
        kernels.push((format!("sampled_{seed}"), Kernel::Sampled(sample_kernel(mdp, &solved.ambiguity, seed)?)));
    }
    kernels.push(("adversarial".to_string(), Kernel::Adversarial));

    let mut reports = Vec::with_capacity(kernels.len());
    let mut within = 0;
    for (label, kernel) in &kernels {
        let report = rollout(kernel, &policy, &rc)?;
        let margin = report.empirical_cvar_alpha - bound;
        let ok = margin <= 3.0 * report.cvar_std_error;
        if matches!(kernel, Kernel::Sampled(_)) {
            within += ok as usize;
        }
        println!(
            "{label:>16}: mean {:.6} (se {:.2e}), CVaR_{} {:.6} (se {:.2e}), CVaR - bound {:+.4}",
            report.empirical_mean,
            report.mean_std_error,
            cfg.alpha,
            report.empirical_cvar_alpha,
            report.cvar_std_error,
            margin
        );
        if samples {
            create_dir(dir)?;
            write_samples(dir.join(format!("samples_{label}.txt")), &report.cost_samples)?;
        }
        reports.push(report);
    }
    let total = settings.kernels as usize;
    let eval = Evaluation { alpha: cfg.alpha, bound, sampled_within_bound: within, sampled_total: total, reports };
    create_dir(dir)?;
    json::write_file(dir.join(ROLLOUT_FILE), &eval).context("writing the rollout report")?;
    println!(
        "upper-bound check: {} ({within}/{total} sampled kernels have CVaR <= V*(start, {}) = {bound:.6} + 3 se)",
        if within == total { "PASS" } else { "FAIL" },
        cfg.alpha
    );
    Ok(Outcome::Done)
}
