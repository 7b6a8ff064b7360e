//! The interpolated Bellman operator on the augmented space `X x Y`.

use rayon::prelude::*;
use smallvec::SmallVec;

use super::envelope::{
    fits, inner_max, Curve, EnvelopeProblem, EnvelopeTerm, GreedyMerge, Profile, FEASIBILITY_TOL,
};
use super::value::upper_hull_into;
use super::{ValueFunction, YGrid};
use crate::error::{Error, Result};
use crate::mdp::{Budget, Mdp};
use crate::riskcore::PROB_EPS;

/// Result of backing up one augmented state.
#[derive(Debug, Clone, PartialEq)]
pub struct Backup {
    pub value: f64,
    pub action: usize,
    /// Maximizing density over the successors of `action`, in row order.
    pub xi: Vec<f64>,
}

/// `T_I` for a fixed MDP, budget and level grid.
#[derive(Debug, Clone, Copy)]
pub struct BellmanOperator<'a> {
    mdp: &'a Mdp,
    budget: &'a Budget,
    ygrid: &'a YGrid,
}

/// Per-state curves `u -> I_x[V](u)`, made concave.
///
/// Concave input passes through unchanged. Non-concave rows only arise when a
/// budget below the top of the grid forces the expectation fallback; taking
/// the least concave majorant keeps every envelope problem concave.
#[derive(Debug, Clone)]
pub struct CurveTable {
    n_nodes: usize,
    data: Vec<f64>,
}

impl CurveTable {
    pub fn new(v: &ValueFunction, ygrid: &YGrid) -> Self {
        let nodes = ygrid.nodes();
        let n = nodes.len();
        let mut data = vec![0.0; v.as_slice().len()];
        data.par_chunks_mut(n).enumerate().for_each(|(x, out)| {
            let products: SmallVec<[f64; 64]> =
                nodes.iter().zip(v.row(x)).map(|(y, val)| y * val).collect();
            upper_hull_into(nodes, &products, out);
        });
        CurveTable { n_nodes: n, data }
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.data[state * self.n_nodes..(state + 1) * self.n_nodes]
    }
}

impl<'a> BellmanOperator<'a> {
    pub fn new(mdp: &'a Mdp, budget: &'a Budget, ygrid: &'a YGrid) -> Result<Self> {
        if ygrid.y_max() < budget.y_max() * (1.0 - FEASIBILITY_TOL) {
            return Err(Error::domain(format!(
                "y-grid ends at {} but the budget needs levels up to {}",
                ygrid.y_max(),
                budget.y_max()
            )));
        }
        if let Budget::Field { kappa, .. } = budget {
            if kappa.len() != mdp.n_states()
                || kappa.iter().zip(&mdp.states).any(|(k, s)| k.len() != s.len())
            {
                return Err(Error::validation("budget field does not match the MDP"));
            }
        }
        if let Budget::Constant(k) = budget {
            if !(*k >= 1.0) {
                return Err(Error::validation(format!("budget {k} must be >= 1")));
            }
        }
        mdp.check()?;
        Ok(BellmanOperator { mdp, budget, ygrid })
    }

    pub fn mdp(&self) -> &'a Mdp {
        self.mdp
    }

    pub fn budget(&self) -> &'a Budget {
        self.budget
    }

    pub fn ygrid(&self) -> &'a YGrid {
        self.ygrid
    }

    fn check_shape(&self, v: &ValueFunction) -> Result<()> {
        if v.n_states() != self.mdp.n_states() || v.n_nodes() != self.ygrid.len() {
            return Err(Error::validation(format!(
                "value table is {}x{}, operator expects {}x{}",
                v.n_states(),
                v.n_nodes(),
                self.mdp.n_states(),
                self.ygrid.len()
            )));
        }
        Ok(())
    }

    /// One Jacobi sweep: `T_I[V]` at every augmented grid point.
    pub fn apply(&self, v: &ValueFunction) -> Result<ValueFunction> {
        self.check_shape(v)?;
        let curves = CurveTable::new(v, self.ygrid);
        let n = self.ygrid.len();
        let mut out = vec![0.0; v.as_slice().len()];
        out.par_chunks_mut(n)
            .enumerate()
            .for_each_init(RowScratch::default, |scratch, (x, row)| {
                self.backup_row(v, &curves, x, row, None, scratch);
            });
        Ok(ValueFunction::from_flat(n, out))
    }

    /// Backed-up values and minimizing actions for every node of state `x`.
    pub(crate) fn backup_row(
        &self,
        v: &ValueFunction,
        curves: &CurveTable,
        x: usize,
        values: &mut [f64],
        mut actions: Option<&mut [usize]>,
        scratch: &mut RowScratch,
    ) {
        let nodes = self.ygrid.nodes();
        let n = nodes.len();
        let gamma = self.mdp.gamma;
        values.fill(f64::INFINITY);
        scratch.f.resize(n, 0.0);
        for (a, row) in self.mdp.actions(x).iter().enumerate() {
            let kappa = self.budget.kappa(x, a);
            let merge = GreedyMerge::new(
                row.next.iter().map(|s| (s.prob, Curve { knots: nodes, values: curves.row(s.state) })),
                kappa,
            );
            scratch.profile.rebuild(merge);
            let capacity = scratch.profile.capacity();
            scratch.profile.eval_ascending(&nodes[1..], &mut scratch.f[1..]);

            let worst = row
                .next
                .iter()
                .filter(|s| s.prob > PROB_EPS)
                .map(|s| v.get(s.state, 0))
                .fold(f64::NEG_INFINITY, f64::max);
            let mut q = row.cost + gamma * worst;
            if q < values[0] {
                values[0] = q;
                if let Some(acts) = actions.as_deref_mut() {
                    acts[0] = a;
                }
            }
            for i in 1..n {
                let y = nodes[i];
                let inner = if fits(capacity, y) {
                    scratch.f[i]
                } else {
                    row.next.iter().map(|s| s.prob * curves.row(s.state)[i]).sum()
                };
                q = row.cost + gamma * inner / y;
                if q < values[i] {
                    values[i] = q;
                    if let Some(acts) = actions.as_deref_mut() {
                        acts[i] = a;
                    }
                }
            }
        }
    }

    /// Envelope problem of action `a` in state `x` at level `y > 0`.
    pub(crate) fn envelope<'c>(
        &self,
        curves: &'c CurveTable,
        x: usize,
        a: usize,
        y: f64,
    ) -> EnvelopeProblem<'c>
    where
        'a: 'c,
    {
        let nodes: &'c [f64] = self.ygrid.nodes();
        EnvelopeProblem {
            y,
            budget: self.budget.kappa(x, a),
            terms: self.mdp.actions(x)[a]
                .next
                .iter()
                .map(|s| EnvelopeTerm {
                    state: s.state,
                    prob: s.prob,
                    curve: Curve { knots: nodes, values: curves.row(s.state) },
                })
                .collect(),
        }
    }

    /// `C(x, a) + gamma * inner_max` at level `y > 0`, with its maximizer.
    pub(crate) fn q_value(
        &self,
        curves: &CurveTable,
        x: usize,
        a: usize,
        y: f64,
    ) -> Result<(f64, Vec<f64>)> {
        let sol = inner_max(&self.envelope(curves, x, a, y))?;
        Ok((self.mdp.actions(x)[a].cost + self.mdp.gamma * sol.value, sol.xi))
    }

    /// Density concentrating all mass on the worst successor (the `y = 0` row).
    pub(crate) fn worst_case_xi(&self, v: &ValueFunction, x: usize, a: usize) -> Vec<f64> {
        let next = &self.mdp.actions(x)[a].next;
        let mut best: Option<(usize, f64)> = None;
        for (j, s) in next.iter().enumerate() {
            if s.prob > PROB_EPS && best.is_none_or(|(_, b)| v.get(s.state, 0) > b) {
                best = Some((j, v.get(s.state, 0)));
            }
        }
        let mut xi = vec![0.0; next.len()];
        if let Some((j, _)) = best {
            xi[j] = 1.0 / next[j].prob;
        }
        xi
    }

    /// Bellman backup at a single grid point, solving each envelope directly.
    pub fn backup_node(&self, v: &ValueFunction, curves: &CurveTable, x: usize, node: usize) -> Result<Backup> {
        if x >= self.mdp.n_states() {
            return Err(Error::domain(format!("unknown state {x}")));
        }
        if node >= self.ygrid.len() {
            return Err(Error::domain(format!("unknown grid node {node}")));
        }
        let mut best: Option<Backup> = None;
        for (a, row) in self.mdp.actions(x).iter().enumerate() {
            let (value, xi) = if node == 0 {
                let xi = self.worst_case_xi(v, x, a);
                let worst = row
                    .next
                    .iter()
                    .filter(|s| s.prob > PROB_EPS)
                    .map(|s| v.get(s.state, 0))
                    .fold(f64::NEG_INFINITY, f64::max);
                (row.cost + self.mdp.gamma * worst, xi)
            } else {
                self.q_value(curves, x, a, self.ygrid.nodes()[node])?
            };
            if best.as_ref().is_none_or(|b| value < b.value) {
                best = Some(Backup { value, action: a, xi });
            }
        }
        best.ok_or_else(|| Error::validation(format!("state {x} has no actions")))
    }
}

#[derive(Default)]
pub(crate) struct RowScratch {
    profile: Profile,
    f: Vec<f64>,
}

/// `T_I[V](x, y_i)` with the minimizing action and its envelope maximizer.
pub fn bellman(
    v: &ValueFunction,
    mdp: &Mdp,
    budget: &Budget,
    ygrid: &YGrid,
    x: usize,
    node: usize,
) -> Result<Backup> {
    let op = BellmanOperator::new(mdp, budget, ygrid)?;
    op.check_shape(v)?;
    op.backup_node(v, &CurveTable::new(v, ygrid), x, node)
}
