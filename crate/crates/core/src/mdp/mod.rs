//! Tabular MDP model, ambiguity specification and the grid-world builder.

mod ambiguity;
mod grid;
mod io;

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::riskcore::PROB_EPS;

pub use ambiguity::{AmbiguitySpec, Budget, BudgetField};
pub use grid::{build_gridworld, Direction, GridLayout, GridSpec, DEFAULT_OBSTACLE_SEED};
pub use io::{load_mdp, mdp_from_json, mdp_to_json, save_mdp};

/// Tolerance on kernel row sums.
pub const ROW_SUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Successor {
    pub state: usize,
    pub prob: f64,
}

/// One action available in a state: its immediate cost and its transition row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRow {
    pub cost: f64,
    pub next: Vec<Successor>,
}

impl ActionRow {
    pub fn new(cost: f64, next: Vec<Successor>) -> Self {
        ActionRow { cost, next }
    }

    /// Deterministic move to `state`.
    pub fn to(cost: f64, state: usize) -> Self {
        ActionRow::new(cost, vec![Successor { state, prob: 1.0 }])
    }

    pub fn prob_sum(&self) -> f64 {
        self.next.iter().map(|s| s.prob).sum()
    }
}

/// A finite discounted-cost MDP with sparse transition rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mdp {
    pub gamma: f64,
    pub start_state: usize,
    /// States whose reachability `validate` checks; may be empty.
    #[serde(default)]
    pub goal_states: Vec<usize>,
    /// `states[x][a]` is action `a` in state `x`.
    pub states: Vec<Vec<ActionRow>>,
    /// Present when the MDP was built from a grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<GridLayout>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    Gamma(f64),
    StartOutOfRange(usize),
    GoalOutOfRange(usize),
    NoActions { state: usize },
    EmptyRow { state: usize, action: usize },
    SuccessorOutOfRange { state: usize, action: usize, successor: usize },
    NegativeProbability { state: usize, action: usize, prob: f64 },
    RowSum { state: usize, action: usize, sum: f64 },
    NonFiniteCost { state: usize, action: usize, cost: f64 },
    UnreachableGoal,
}

impl Issue {
    /// Issues that break the MDP invariants, as opposed to modelling warnings.
    pub fn is_fatal(&self) -> bool {
        !matches!(self, Issue::UnreachableGoal)
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::Gamma(g) => write!(f, "discount {g} not in [0, 1)"),
            Issue::StartOutOfRange(s) => write!(f, "start state {s} out of range"),
            Issue::GoalOutOfRange(s) => write!(f, "goal state {s} out of range"),
            Issue::NoActions { state } => write!(f, "state {state} has no actions"),
            Issue::EmptyRow { state, action } => {
                write!(f, "({state}, {action}) has no successors")
            }
            Issue::SuccessorOutOfRange { state, action, successor } => {
                write!(f, "({state}, {action}) points at unknown state {successor}")
            }
            Issue::NegativeProbability { state, action, prob } => {
                write!(f, "({state}, {action}) has probability {prob}")
            }
            Issue::RowSum { state, action, sum } => {
                write!(f, "({state}, {action}) row sums to {sum}")
            }
            Issue::NonFiniteCost { state, action, cost } => {
                write!(f, "({state}, {action}) has cost {cost}")
            }
            Issue::UnreachableGoal => write!(f, "no goal state is reachable from the start"),
        }
    }
}

/// Result of [`Mdp::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub issues: Vec<Issue>,
    /// Largest absolute finite cost.
    pub cost_bound: f64,
}

impl Diagnostics {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn fatal(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.is_fatal())
    }
}

impl Mdp {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn actions(&self, state: usize) -> &[ActionRow] {
        &self.states[state]
    }

    pub fn n_actions(&self, state: usize) -> usize {
        self.states[state].len()
    }

    /// `max |C(x, a)|` over all state-action pairs.
    pub fn cost_bound(&self) -> f64 {
        self.states
            .iter()
            .flatten()
            .map(|row| row.cost.abs())
            .filter(|c| c.is_finite())
            .fold(0.0, f64::max)
    }

    /// True if `state` loops onto itself with zero cost under every action.
    pub fn is_absorbing_free(&self, state: usize) -> bool {
        self.states[state].iter().all(|row| {
            row.cost == 0.0 && row.next.iter().all(|s| s.state == state || s.prob <= PROB_EPS)
        })
    }

    /// Structural diagnostics; never fails.
    pub fn validate(&self) -> Diagnostics {
        let mut issues = Vec::new();
        let n = self.n_states();
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            issues.push(Issue::Gamma(self.gamma));
        }
        if self.start_state >= n {
            issues.push(Issue::StartOutOfRange(self.start_state));
        }
        for &g in &self.goal_states {
            if g >= n {
                issues.push(Issue::GoalOutOfRange(g));
            }
        }
        for (x, actions) in self.states.iter().enumerate() {
            if actions.is_empty() {
                issues.push(Issue::NoActions { state: x });
            }
            for (a, row) in actions.iter().enumerate() {
                if !row.cost.is_finite() {
                    issues.push(Issue::NonFiniteCost { state: x, action: a, cost: row.cost });
                }
                if row.next.is_empty() {
                    issues.push(Issue::EmptyRow { state: x, action: a });
                    continue;
                }
                for s in &row.next {
                    if s.state >= n {
                        issues.push(Issue::SuccessorOutOfRange {
                            state: x,
                            action: a,
                            successor: s.state,
                        });
                    }
                    if !(s.prob >= 0.0) {
                        issues.push(Issue::NegativeProbability { state: x, action: a, prob: s.prob });
                    }
                }
                let sum = row.prob_sum();
                if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
                    issues.push(Issue::RowSum { state: x, action: a, sum });
                }
            }
        }
        let structural_ok = issues.iter().all(|i| {
            !matches!(i, Issue::StartOutOfRange(_) | Issue::SuccessorOutOfRange { .. })
        });
        if structural_ok && !self.goal_states.is_empty() {
            let reach = self.reachable_from(self.start_state);
            if !self.goal_states.iter().any(|&g| g < n && reach[g]) {
                issues.push(Issue::UnreachableGoal);
            }
        }
        Diagnostics { issues, cost_bound: self.cost_bound() }
    }

    /// Breadth-first reachability over transitions with positive probability.
    pub fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n_states()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(x) = queue.pop_front() {
            for s in self.states[x].iter().flat_map(|row| &row.next) {
                if s.prob > PROB_EPS && !seen[s.state] {
                    seen[s.state] = true;
                    queue.push_back(s.state);
                }
            }
        }
        seen
    }

    /// Fails with the first fatal issue, if any.
    pub fn check(&self) -> Result<()> {
        let diag = self.validate();
        let fatal: Vec<String> = diag.fatal().map(|i| i.to_string()).collect();
        if fatal.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "{} invalid MDP entries, first: {}",
                fatal.len(),
                fatal[0]
            )))
        }
    }
}
