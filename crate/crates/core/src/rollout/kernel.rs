use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{AmbiguitySpec, Budget, Mdp, ROW_SUM_TOL};
use crate::riskcore::PROB_EPS;
use crate::solver::{Decision, SolveResult};

/// Which transition law drives a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    Nominal,
    Sampled { seed: u64 },
    Adversarial,
}

/// A fixed kernel drawn inside the ambiguity set: `rows[x][a][j]` is the
/// probability of the `j`-th nominal successor of `(x, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledKernel {
    pub seed: u64,
    pub rows: Vec<Vec<Vec<f64>>>,
}

/// Transition law for a rollout. The adversarial law depends on the policy's
/// current decision, so it carries no table of its own.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    Nominal,
    Sampled(SampledKernel),
    Adversarial,
}

impl Kernel {
    pub fn kind(&self) -> KernelKind {
        match self {
            Kernel::Nominal => KernelKind::Nominal,
            Kernel::Sampled(k) => KernelKind::Sampled { seed: k.seed },
            Kernel::Adversarial => KernelKind::Adversarial,
        }
    }
}

/// Draw a kernel with `P~/P <= K` (or `kappa(x, a)`) in every row.
///
/// Each row starts from the nominal row reweighted by independent unit
/// exponentials and is then water-filled under the caps. Rows are drawn
/// state-major, action-minor from a single stream seeded with `seed`.
pub fn sample_kernel(mdp: &Mdp, amb: &AmbiguitySpec, seed: u64) -> Result<SampledKernel> {
    match amb {
        AmbiguitySpec::KlFixed { .. } => {
            Err(Error::Unsupported("kernel sampling inside a KL ball is not supported".into()))
        }
        _ => sample_kernel_with_budget(mdp, &amb.resolve(mdp)?, seed),
    }
}

pub fn sample_kernel_with_budget(mdp: &Mdp, budget: &Budget, seed: u64) -> Result<SampledKernel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(mdp.n_states());
    for (x, actions) in mdp.states.iter().enumerate() {
        let mut per_action = Vec::with_capacity(actions.len());
        for (a, row) in actions.iter().enumerate() {
            let kappa = budget.kappa(x, a);
            let probs: Vec<f64> = row.next.iter().map(|s| s.prob).collect();
            let weights: Vec<f64> = probs
                .iter()
                .map(|_| -(1.0 - rng.gen::<f64>()).ln())
                .collect();
            let caps: Vec<f64> = probs.iter().map(|p| kappa * p).collect();
            let q = water_fill(&probs, &caps, &weights)
                .map_err(|e| Error::validation(format!("state {x}, action {a}: {e}")))?;
            per_action.push(q);
        }
        rows.push(per_action);
    }
    Ok(SampledKernel { seed, rows })
}

/// Probability vector `q_j = min(cap_j, lambda * w_j * p_j)` with `sum q = 1`.
///
/// Zero-probability entries stay at zero. Fails when the caps cannot reach one.
pub fn water_fill(probs: &[f64], caps: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    let n = probs.len();
    let total_cap: f64 = caps.iter().zip(probs).filter(|(_, p)| **p > PROB_EPS).map(|(c, _)| c).sum();
    if total_cap < 1.0 - ROW_SUM_TOL {
        return Err(Error::validation(format!("caps sum to {total_cap} < 1")));
    }
    let mut q = vec![0.0; n];
    if total_cap <= 1.0 + ROW_SUM_TOL {
        // Every cap binds, e.g. a unit budget: the nominal row itself.
        for j in 0..n {
            if probs[j] > PROB_EPS {
                q[j] = caps[j];
            }
        }
        return Ok(q);
    }
    let raw: Vec<f64> = (0..n).map(|j| if probs[j] > PROB_EPS { weights[j] * probs[j] } else { 0.0 }).collect();
    // Entries saturate in order of cap / raw; find the water level.
    let mut order: Vec<usize> = (0..n).filter(|&j| raw[j] > 0.0).collect();
    order.sort_by(|&i, &j| (caps[i] / raw[i]).total_cmp(&(caps[j] / raw[j])).then(i.cmp(&j)));
    let mut capped = 0.0;
    let mut free: f64 = order.iter().map(|&j| raw[j]).sum();
    let mut k = 0;
    let mut lambda = (1.0 - capped) / free;
    while k < order.len() && lambda * raw[order[k]] >= caps[order[k]] {
        capped += caps[order[k]];
        free -= raw[order[k]];
        k += 1;
        lambda = if free > 0.0 { (1.0 - capped) / free } else { 0.0 };
    }
    for (idx, &j) in order.iter().enumerate() {
        q[j] = if idx < k { caps[j] } else { lambda * raw[j] };
    }
    // Weights of zero on positive-probability entries can leave mass unplaced.
    let sum: f64 = q.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::validation(format!("water-filling reached {sum}, not 1")));
    }
    Ok(q)
}

/// Worst-case row `Q(x'|x, a) = xi(x') P(x'|x, a)` for a policy decision.
pub fn adversarial_row(mdp: &Mdp, decision: &Decision<'_>) -> Vec<f64> {
    mdp.actions(decision.state)[decision.action]
        .next
        .iter()
        .zip(decision.xi.iter())
        .map(|(s, xi)| xi * s.prob)
        .collect()
}

/// Worst-case rows at every grid point: entry `x * n_nodes + i` is the row
/// for the stored greedy action at `(x, y_i)`.
pub fn adversarial_kernel(result: &SolveResult, mdp: &Mdp) -> Result<Vec<Vec<f64>>> {
    let n = result.ygrid.len();
    if result.xi_star.len() != mdp.n_states() * n || result.greedy_action.len() != mdp.n_states() * n {
        return Err(Error::domain("solve result is missing maximizer entries"));
    }
    let mut out = Vec::with_capacity(result.xi_star.len());
    for x in 0..mdp.n_states() {
        for i in 0..n {
            let a = result.action(x, i);
            let row = mdp
                .states
                .get(x)
                .and_then(|acts| acts.get(a))
                .ok_or_else(|| Error::domain(format!("no action {a} in state {x}")))?;
            let xi = result.xi(x, i);
            if xi.len() != row.next.len() {
                return Err(Error::domain(format!("maximizer at state {x}, node {i} has the wrong length")));
            }
            out.push(row.next.iter().zip(xi).map(|(s, xi)| xi * s.prob).collect());
        }
    }
    Ok(out)
}
