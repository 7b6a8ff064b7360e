//! Executing the solved policy on the augmented state `(x, y)`.

use std::borrow::Cow;

use super::bellman::{BellmanOperator, CurveTable};
use super::SolveResult;
use crate::error::{Error, Result};
use crate::mdp::{Budget, Mdp};

/// Greedy policy with respect to a solved value table.
///
/// At grid nodes it replays the stored actions and maximizers. Between nodes
/// it compares the actions of the two bracketing nodes by their Bellman value
/// at the actual level and re-solves the envelope for the winner.
#[derive(Debug, Clone)]
pub struct GreedyPolicy<'a> {
    op: BellmanOperator<'a>,
    result: &'a SolveResult,
    curves: CurveTable,
}

/// What the policy does at one augmented state.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision<'r> {
    pub state: usize,
    pub y: f64,
    pub action: usize,
    /// Envelope maximizer over the successors of `action`, in row order.
    pub xi: Cow<'r, [f64]>,
}

impl<'a> GreedyPolicy<'a> {
    pub fn new(mdp: &'a Mdp, budget: &'a Budget, result: &'a SolveResult) -> Result<Self> {
        let op = BellmanOperator::new(mdp, budget, &result.ygrid)?;
        let cells = mdp.n_states() * result.ygrid.len();
        if result.v_star.n_states() != mdp.n_states() || result.v_star.n_nodes() != result.ygrid.len() {
            return Err(Error::domain("solve result does not match the MDP"));
        }
        if result.greedy_action.len() != cells || result.xi_star.len() != cells {
            return Err(Error::domain("solve result is missing policy or maximizer entries"));
        }
        for x in 0..mdp.n_states() {
            for i in 0..result.ygrid.len() {
                let a = result.action(x, i);
                if a >= mdp.n_actions(x) || result.xi(x, i).len() != mdp.actions(x)[a].next.len() {
                    return Err(Error::domain(format!("maximizer at state {x}, node {i} does not fit its action")));
                }
            }
        }
        Ok(GreedyPolicy { op, result, curves: CurveTable::new(&result.v_star, &result.ygrid) })
    }

    pub fn mdp(&self) -> &'a Mdp {
        self.op.mdp()
    }

    pub fn result(&self) -> &'a SolveResult {
        self.result
    }

    /// Action and maximizer at state `x`, level `y` in `(0, y_max]`.
    pub fn decide(&self, x: usize, y: f64) -> Result<Decision<'a>> {
        let ygrid = &self.result.ygrid;
        if x >= self.mdp().n_states() {
            return Err(Error::domain(format!("unknown state {x}")));
        }
        if !(y > 0.0 && y <= ygrid.y_max()) {
            return Err(Error::domain(format!("confidence level {y} outside (0, {}]", ygrid.y_max())));
        }
        let i = ygrid.bracket(y);
        let nodes = ygrid.nodes();
        for node in [i, i + 1] {
            if nodes[node] == y {
                return Ok(Decision {
                    state: x,
                    y,
                    action: self.result.action(x, node),
                    xi: Cow::Borrowed(self.result.xi(x, node)),
                });
            }
        }
        let (lo, hi) = (self.result.action(x, i), self.result.action(x, i + 1));
        let (q_lo, xi_lo) = self.op.q_value(&self.curves, x, lo, y)?;
        if lo == hi {
            return Ok(Decision { state: x, y, action: lo, xi: Cow::Owned(xi_lo) });
        }
        let (q_hi, xi_hi) = self.op.q_value(&self.curves, x, hi, y)?;
        let pick_hi = q_hi < q_lo || (q_hi == q_lo && hi < lo);
        Ok(if pick_hi {
            Decision { state: x, y, action: hi, xi: Cow::Owned(xi_hi) }
        } else {
            Decision { state: x, y, action: lo, xi: Cow::Owned(xi_lo) }
        })
    }

    /// Level carried into the successor at position `j` of the decided row:
    /// `y * xi[j]`, clamped to `[y_min, y_max]`.
    pub fn next_level_at(&self, decision: &Decision<'_>, j: usize) -> f64 {
        let ygrid = &self.result.ygrid;
        (decision.y * decision.xi[j]).clamp(ygrid.y_min(), ygrid.y_max())
    }

    /// Level carried into `next_state`, which must be a successor of the decision.
    pub fn next_level(&self, decision: &Decision<'_>, next_state: usize) -> Result<f64> {
        let row = &self.mdp().actions(decision.state)[decision.action];
        let j = row.next.iter().position(|s| s.state == next_state).ok_or_else(|| {
            Error::domain(format!(
                "state {next_state} is not a successor of ({}, action {})",
                decision.state, decision.action
            ))
        })?;
        Ok(self.next_level_at(decision, j))
    }
}

/// One policy step: the action at `(x, y)` and the level after observing `observed_next`.
pub fn policy_step(policy: &GreedyPolicy<'_>, x: usize, y: f64, observed_next: usize) -> Result<(usize, f64)> {
    let decision = policy.decide(x, y)?;
    let y_next = policy.next_level(&decision, observed_next)?;
    Ok((decision.action, y_next))
}
