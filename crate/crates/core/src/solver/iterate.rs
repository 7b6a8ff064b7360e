use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bellman::{BellmanOperator, CurveTable, RowScratch};
use super::value::check_concavity;
use super::{ValueFunction, YGrid};
use crate::error::{Error, Result};
use crate::mdp::{Budget, Mdp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    /// Stop once the sup-norm change of a sweep drops below this.
    pub epsilon: f64,
    pub max_sweeps: usize,
    /// Worker threads for the sweeps; `None` uses the global pool.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { epsilon: 1e-6, max_sweeps: 2000, threads: None }
    }
}

/// Converged (or last) value table with the greedy policy it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub ygrid: YGrid,
    pub v_star: ValueFunction,
    /// `greedy_action[x * n_nodes + i]`.
    pub greedy_action: Vec<usize>,
    /// Envelope maximizer of the greedy action at each grid point, aligned
    /// with that action's successor row.
    pub xi_star: Vec<Vec<f64>>,
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    /// Nodes where `y * V*` fails the concavity check.
    pub concavity_violations: usize,
}

impl SolveResult {
    pub fn action(&self, state: usize, node: usize) -> usize {
        self.greedy_action[state * self.ygrid.len() + node]
    }

    pub fn xi(&self, state: usize, node: usize) -> &[f64] {
        &self.xi_star[state * self.ygrid.len() + node]
    }

    pub fn value(&self, state: usize, node: usize) -> f64 {
        self.v_star.get(state, node)
    }
}

fn stopping(residual: f64, gamma: f64, epsilon: f64) -> bool {
    // Either the step itself or the contraction bound on the distance to the
    // fixed point, gamma / (1 - gamma) * residual, is below epsilon.
    residual < epsilon || gamma * residual < epsilon * (1.0 - gamma)
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::validation(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Value iteration with the interpolated operator, starting from `V_0 = 0`.
pub fn value_iteration(
    mdp: &Mdp,
    budget: &Budget,
    ygrid: &YGrid,
    options: &SolveOptions,
) -> Result<SolveResult> {
    let v0 = ValueFunction::zeros(mdp.n_states(), ygrid.len());
    value_iteration_from(mdp, budget, ygrid, options, v0)
}

/// Value iteration from a caller-supplied initial table.
pub fn value_iteration_from(
    mdp: &Mdp,
    budget: &Budget,
    ygrid: &YGrid,
    options: &SolveOptions,
    v0: ValueFunction,
) -> Result<SolveResult> {
    if !(options.epsilon > 0.0) {
        return Err(Error::domain(format!("epsilon {} must be positive", options.epsilon)));
    }
    if options.max_sweeps == 0 {
        return Err(Error::domain("max_sweeps must be positive"));
    }
    let op = BellmanOperator::new(mdp, budget, ygrid)?;
    in_pool(options.threads, || {
        let mut v = v0;
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        let mut converged = false;
        while iterations < options.max_sweeps {
            let next = op.apply(&v)?;
            residual = next.sup_distance(&v);
            v = next;
            iterations += 1;
            if stopping(residual, mdp.gamma, options.epsilon) {
                converged = true;
                break;
            }
        }
        let (greedy_action, xi_star) = extract_policy(&op, &v)?;
        let concavity_violations = check_concavity(&v, ygrid).len();
        Ok(SolveResult {
            ygrid: ygrid.clone(),
            v_star: v,
            greedy_action,
            xi_star,
            iterations,
            final_residual: residual,
            converged,
            concavity_violations,
        })
    })?
}

/// Greedy actions and envelope maximizers with respect to `v`.
pub fn extract_policy(op: &BellmanOperator<'_>, v: &ValueFunction) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let ygrid = op.ygrid();
    let n = ygrid.len();
    let curves = CurveTable::new(v, ygrid);
    let mut actions = vec![0usize; v.as_slice().len()];
    actions
        .par_chunks_mut(n)
        .enumerate()
        .for_each_init(
            || (RowScratch::default(), vec![0.0; n]),
            |(scratch, values), (x, acts)| op.backup_row(v, &curves, x, values, Some(acts), scratch),
        );
    let xi: Result<Vec<Vec<f64>>> = actions
        .par_iter()
        .enumerate()
        .map(|(k, &a)| {
            let (x, i) = (k / n, k % n);
            if i == 0 {
                Ok(op.worst_case_xi(v, x, a))
            } else {
                op.q_value(&curves, x, a, ygrid.nodes()[i]).map(|(_, xi)| xi)
            }
        })
        .collect();
    Ok((actions, xi?))
}

/// Rebuild a result from a stored value table (e.g. read back from CSV).
pub fn result_from_values(
    mdp: &Mdp,
    budget: &Budget,
    ygrid: &YGrid,
    v: ValueFunction,
) -> Result<SolveResult> {
    let op = BellmanOperator::new(mdp, budget, ygrid)?;
    if v.n_states() != mdp.n_states() || v.n_nodes() != ygrid.len() {
        return Err(Error::validation("value table does not match the MDP and grid"));
    }
    let residual = op.apply(&v)?.sup_distance(&v);
    let (greedy_action, xi_star) = extract_policy(&op, &v)?;
    Ok(SolveResult {
        ygrid: ygrid.clone(),
        concavity_violations: check_concavity(&v, ygrid).len(),
        v_star: v,
        greedy_action,
        xi_star,
        iterations: 0,
        final_residual: residual,
        converged: stopping(residual, mdp.gamma, f64::MIN_POSITIVE),
    })
}
