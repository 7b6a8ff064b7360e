//! Monte-Carlo evaluation of a solved policy.
//!
//! Episode `e` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `e`, so
//! each episode is reproducible on its own and parallel runs match serial
//! ones. Bootstrap resampling uses stream `u64::MAX` of the same seed.

mod kernel;

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::fmt_f64;
use crate::riskcore::{cvar, empirical_distribution, PROB_EPS};
use crate::solver::GreedyPolicy;

pub use kernel::{
    adversarial_kernel, adversarial_row, sample_kernel, sample_kernel_with_budget, water_fill, Kernel,
    KernelKind, SampledKernel,
};

/// Largest admissible tail bound `gamma^horizon * C_max / (1 - gamma)`.
pub const TRUNCATION_TOL: f64 = 1e-6;

const BOOTSTRAP_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    /// Start state; `None` uses the MDP's start state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
    /// Initial confidence level, also the level of the reported CVaR.
    pub alpha: f64,
    pub horizon: usize,
    pub n_episodes: usize,
    pub seed: u64,
    /// Bootstrap resamples for the standard errors.
    pub bootstrap: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig { start: None, alpha: 0.48, horizon: 400, n_episodes: 10_000, seed: 0, bootstrap: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutReport {
    pub kernel: KernelKind,
    pub start_state: usize,
    pub alpha: f64,
    pub n_episodes: usize,
    pub horizon: usize,
    pub seed: u64,
    pub empirical_mean: f64,
    /// Standard error of the mean, `sd / sqrt(n)`.
    pub mean_std_error: f64,
    pub empirical_cvar_alpha: f64,
    /// Bootstrap standard error of the empirical CVaR.
    pub cvar_std_error: f64,
    /// `gamma^horizon * C_max / (1 - gamma)`: the most any sample can lose to truncation.
    pub truncation_bound: f64,
    /// Discounted cost of each episode, in episode order.
    pub cost_samples: Vec<f64>,
}

/// Roll out `policy` under `kernel` and summarize the discounted costs.
pub fn rollout(kernel: &Kernel, policy: &GreedyPolicy<'_>, config: &RolloutConfig) -> Result<RolloutReport> {
    let mdp = policy.mdp();
    let start = config.start.unwrap_or(mdp.start_state);
    if start >= mdp.n_states() {
        return Err(Error::domain(format!("unknown start state {start}")));
    }
    if !(config.alpha > 0.0 && config.alpha <= 1.0) {
        return Err(Error::domain(format!("alpha = {} outside (0, 1]", config.alpha)));
    }
    if config.n_episodes == 0 {
        return Err(Error::validation("rollout needs at least one episode"));
    }
    let truncation_bound = truncation_bound(mdp.gamma, mdp.cost_bound(), config.horizon);
    if !(truncation_bound < TRUNCATION_TOL) {
        return Err(Error::validation(format!(
            "horizon {} leaves a truncation error of up to {truncation_bound:e}",
            config.horizon
        )));
    }
    if let Kernel::Sampled(k) = kernel {
        let shape_ok = k.rows.len() == mdp.n_states()
            && k.rows.iter().zip(&mdp.states).all(|(r, acts)| {
                r.len() == acts.len() && r.iter().zip(acts).all(|(q, row)| q.len() == row.next.len())
            });
        if !shape_ok {
            return Err(Error::validation("sampled kernel does not match the MDP"));
        }
    }
    let absorbing: Vec<bool> = (0..mdp.n_states()).map(|x| mdp.is_absorbing_free(x)).collect();
    let samples = (0..config.n_episodes)
        .into_par_iter()
        .map(|e| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(e as u64);
            episode(kernel, policy, &absorbing, start, config, &mut rng)
        })
        .collect::<Result<Vec<f64>>>()?;

    let empirical_cvar_alpha = cvar(&empirical_distribution(&samples)?, config.alpha)?;
    let cvar_std_error = bootstrap_cvar_se(&samples, config.alpha, config.bootstrap, config.seed)?;
    let n = samples.len() as f64;
    let empirical_mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|s| (s - empirical_mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(RolloutReport {
        kernel: kernel.kind(),
        start_state: start,
        alpha: config.alpha,
        n_episodes: config.n_episodes,
        horizon: config.horizon,
        seed: config.seed,
        empirical_mean,
        mean_std_error: (var / n).sqrt(),
        empirical_cvar_alpha,
        cvar_std_error,
        truncation_bound,
        cost_samples: samples,
    })
}

pub fn truncation_bound(gamma: f64, cost_bound: f64, horizon: usize) -> f64 {
    if gamma == 0.0 {
        return if horizon == 0 { cost_bound } else { 0.0 };
    }
    gamma.powf(horizon as f64) * cost_bound / (1.0 - gamma)
}

fn episode(
    kernel: &Kernel,
    policy: &GreedyPolicy<'_>,
    absorbing: &[bool],
    start: usize,
    config: &RolloutConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mdp = policy.mdp();
    let (mut x, mut y) = (start, config.alpha);
    let mut total = 0.0;
    let mut discount = 1.0;
    for _ in 0..config.horizon {
        if absorbing[x] {
            break;
        }
        let decision = policy.decide(x, y)?;
        let row = &mdp.actions(x)[decision.action];
        total += discount * row.cost;
        let u: f64 = rng.gen();
        let j = match kernel {
            Kernel::Nominal => pick(row.next.iter().map(|s| s.prob), u),
            Kernel::Sampled(k) => pick(k.rows[x][decision.action].iter().copied(), u),
            Kernel::Adversarial => pick(row.next.iter().zip(decision.xi.iter()).map(|(s, xi)| xi * s.prob), u),
        };
        y = policy.next_level_at(&decision, j);
        x = row.next[j].state;
        discount *= mdp.gamma;
    }
    Ok(total)
}

/// Inverse-CDF draw; falls back to the last entry with positive mass so
/// rounding in the row sum never selects an impossible successor.
fn pick(probs: impl Iterator<Item = f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (j, p) in probs.enumerate() {
        if p > PROB_EPS {
            acc += p;
            last = j;
            if u < acc {
                return j;
            }
        }
    }
    last
}

fn bootstrap_cvar_se(samples: &[f64], alpha: f64, resamples: usize, seed: u64) -> Result<f64> {
    if resamples < 2 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(BOOTSTRAP_STREAM);
    let n = samples.len();
    let mut draw = vec![0.0; n];
    let mut stats = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for d in draw.iter_mut() {
            *d = samples[rng.gen_range(0..n)];
        }
        stats.push(cvar(&empirical_distribution(&draw)?, alpha)?);
    }
    let m = stats.iter().sum::<f64>() / resamples as f64;
    let var = stats.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (resamples - 1) as f64;
    Ok(var.sqrt())
}

/// One cost per line, full precision.
pub fn write_samples(path: impl AsRef<Path>, samples: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in samples {
        writeln!(out, "{}", fmt_f64(*s))?;
    }
    out.flush()?;
    Ok(())
}
