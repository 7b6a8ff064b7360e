use serde::{Deserialize, Serialize};

use super::YGrid;
use crate::error::{Error, Result};

/// Relative tolerance on slope increases when judging concavity of `y * V`.
pub const CONCAVITY_TOL: f64 = 1e-9;

/// Table `V(x, y_i)` on the augmented state space, row-major by state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    n_nodes: usize,
    data: Vec<f64>,
}

impl ValueFunction {
    pub fn constant(n_states: usize, n_nodes: usize, value: f64) -> Self {
        ValueFunction { n_nodes, data: vec![value; n_states * n_nodes] }
    }

    pub fn zeros(n_states: usize, n_nodes: usize) -> Self {
        Self::constant(n_states, n_nodes, 0.0)
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_nodes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_nodes) {
            return Err(Error::validation("value rows have unequal lengths"));
        }
        Ok(ValueFunction { n_nodes, data: rows.concat() })
    }

    pub(crate) fn from_flat(n_nodes: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len() % n_nodes, 0);
        ValueFunction { n_nodes, data }
    }

    pub fn n_states(&self) -> usize {
        self.data.len() / self.n_nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn get(&self, state: usize, node: usize) -> f64 {
        self.data[state * self.n_nodes + node]
    }

    pub fn set(&mut self, state: usize, node: usize, value: f64) {
        self.data[state * self.n_nodes + node] = value;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.data[state * self.n_nodes..(state + 1) * self.n_nodes]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `max |self - other|`.
    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `max |V|`.
    pub fn sup_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Linear interpolation of `y * V(x, y)` between grid nodes.
///
/// Returns the interpolated product, not `V` itself; divide by `y` for the
/// value at an off-node level. At `y = 0` the product is zero.
pub fn interpolate(v: &ValueFunction, ygrid: &YGrid, state: usize, y: f64) -> Result<f64> {
    if !(y >= 0.0 && y <= ygrid.y_max()) {
        return Err(Error::domain(format!(
            "confidence level {y} outside [0, {}]",
            ygrid.y_max()
        )));
    }
    if state >= v.n_states() {
        return Err(Error::domain(format!("unknown state {state}")));
    }
    Ok(interpolate_row(ygrid.nodes(), v.row(state), y, ygrid.bracket(y)))
}

/// `V(x, y)` at any level: the interpolated product divided by `y`, and the
/// stored worst-case value at `y = 0`.
pub fn value_at(v: &ValueFunction, ygrid: &YGrid, state: usize, y: f64) -> Result<f64> {
    if y == 0.0 {
        if state >= v.n_states() {
            return Err(Error::domain(format!("unknown state {state}")));
        }
        return Ok(v.get(state, 0));
    }
    Ok(interpolate(v, ygrid, state, y)? / y)
}

fn interpolate_row(nodes: &[f64], row: &[f64], y: f64, i: usize) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    let (lo, hi) = (nodes[i], nodes[i + 1]);
    let w_lo = lo * row[i];
    let w_hi = hi * row[i + 1];
    if y == hi {
        return w_hi;
    }
    w_lo + (w_hi - w_lo) * (y - lo) / (hi - lo)
}

/// A node where `y * V(x, y)` bends upward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcavityViolation {
    pub state: usize,
    /// Middle node of the offending triple.
    pub node: usize,
    /// Slope increase across the node.
    pub excess: f64,
}

/// Lists every node where the piecewise-linear curve through
/// `(y_i, y_i V(x, y_i))` turns convex by more than the tolerance.
pub fn check_concavity(v: &ValueFunction, ygrid: &YGrid) -> Vec<ConcavityViolation> {
    let nodes = ygrid.nodes();
    let mut out = Vec::new();
    for x in 0..v.n_states() {
        let row = v.row(x);
        let slope = |i: usize| {
            (nodes[i + 1] * row[i + 1] - nodes[i] * row[i]) / (nodes[i + 1] - nodes[i])
        };
        for i in 1..nodes.len() - 1 {
            let (left, right) = (slope(i - 1), slope(i));
            let excess = right - left;
            if excess > CONCAVITY_TOL * left.abs().max(right.abs()).max(1.0) {
                out.push(ConcavityViolation { state: x, node: i, excess });
            }
        }
    }
    out
}

/// Least concave majorant of the points `(knots[i], values[i])`, evaluated
/// back at the knots. Leaves concave input unchanged.
pub(crate) fn upper_hull_into(knots: &[f64], values: &[f64], out: &mut [f64]) {
    let n = knots.len();
    let mut hull: smallvec::SmallVec<[usize; 32]> = smallvec::SmallVec::new();
    for i in 0..n {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // Drop b if it lies on or below the chord a -> i.
            let cross = (knots[b] - knots[a]) * (values[i] - values[a])
                - (values[b] - values[a]) * (knots[i] - knots[a]);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        out[a] = values[a];
        for k in a + 1..b {
            out[k] = values[a] + (values[b] - values[a]) * (knots[k] - knots[a]) / (knots[b] - knots[a]);
        }
    }
    out[hull[hull.len() - 1]] = values[hull[hull.len() - 1]];
}
