//! The inner maximization of the budgeted Bellman backup.
//!
//! With `u = y * xi` the envelope problem
//!
//! ```text
//! max  sum_j P_j g_j(u_j) / y
//! s.t. sum_j P_j u_j = y,   0 <= u_j <= min(budget, end_j)
//! ```
//!
//! is a separable concave resource allocation: each successor curve `g_j` is
//! piecewise linear and concave, so pouring probability mass into segments in
//! order of decreasing slope is optimal.

use smallvec::SmallVec;

use super::value::CONCAVITY_TOL;
use crate::error::{Error, Result};
use crate::riskcore::PROB_EPS;

/// Relative slack when deciding whether a level fits inside the envelope.
pub const FEASIBILITY_TOL: f64 = 1e-9;

pub(crate) fn fits(capacity: f64, y: f64) -> bool {
    capacity >= y * (1.0 - FEASIBILITY_TOL)
}

/// Piecewise-linear curve through `(knots[i], values[i])`, `knots[0] = 0`.
#[derive(Debug, Clone, Copy)]
pub struct Curve<'a> {
    pub knots: &'a [f64],
    pub values: &'a [f64],
}

impl<'a> Curve<'a> {
    pub fn new(knots: &'a [f64], values: &'a [f64]) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(Error::validation("curve needs at least two knots, one value each"));
        }
        if knots[0] != 0.0 || knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation("curve knots must start at 0 and increase"));
        }
        Ok(Curve { knots, values })
    }

    pub fn end(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    fn slope(&self, seg: usize) -> f64 {
        (self.values[seg + 1] - self.values[seg]) / (self.knots[seg + 1] - self.knots[seg])
    }

    /// Curve value at `u`, clamped to the knot range.
    pub fn eval(&self, u: f64) -> f64 {
        let n = self.knots.len();
        if u <= 0.0 {
            return self.values[0];
        }
        if u >= self.knots[n - 1] {
            return self.values[n - 1];
        }
        let upper = self.knots.partition_point(|&k| k < u);
        if self.knots[upper] == u {
            return self.values[upper];
        }
        let i = upper - 1;
        self.values[i] + self.slope(i) * (u - self.knots[i])
    }

    /// First segment whose slope rises above its predecessor's.
    fn first_convex_kink(&self) -> Option<(usize, f64)> {
        (1..self.knots.len() - 1).find_map(|i| {
            let (left, right) = (self.slope(i - 1), self.slope(i));
            let excess = right - left;
            (excess > CONCAVITY_TOL * left.abs().max(right.abs()).max(1.0)).then_some((i, excess))
        })
    }
}

/// One successor of a state-action pair.
#[derive(Debug, Clone, Copy)]
pub struct EnvelopeTerm<'a> {
    /// Successor state index; used in error messages.
    pub state: usize,
    pub prob: f64,
    /// `u -> I[V](u)` for this successor.
    pub curve: Curve<'a>,
}

#[derive(Debug, Clone)]
pub struct EnvelopeProblem<'a> {
    /// Current confidence level.
    pub y: f64,
    /// Budget `kappa(x, a)`; caps each `u_j = y * xi_j`.
    pub budget: f64,
    pub terms: Vec<EnvelopeTerm<'a>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeSolution {
    pub value: f64,
    /// Maximizing density ratio per term.
    pub xi: Vec<f64>,
    /// True when `y` exceeded the envelope capacity and `xi = 1` was used.
    pub expectation_fallback: bool,
}

/// A stretch of one successor's curve, in the order the greedy fills them.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Piece {
    pub term: usize,
    pub slope: f64,
    /// Probability mass the piece can absorb.
    pub mass: f64,
    /// `u` of the successor once the piece is full.
    pub u_end: f64,
}

#[derive(Clone, Copy)]
struct Cursor<'a> {
    prob: f64,
    curve: Curve<'a>,
    cap: f64,
    seg: usize,
}

impl Cursor<'_> {
    fn exhausted(&self) -> bool {
        self.seg + 1 >= self.curve.knots.len() || self.curve.knots[self.seg] >= self.cap
    }
}

/// Merges the segments of all curves by decreasing slope. Ties go to the
/// lower term index, and within a term segments come out in order.
pub(crate) struct GreedyMerge<'a> {
    cursors: SmallVec<[Cursor<'a>; 8]>,
}

impl<'a> GreedyMerge<'a> {
    pub fn new(terms: impl IntoIterator<Item = (f64, Curve<'a>)>, budget: f64) -> Self {
        let cursors = terms
            .into_iter()
            .map(|(prob, curve)| Cursor { prob, cap: budget.min(curve.end()), curve, seg: 0 })
            .collect();
        GreedyMerge { cursors }
    }

    /// Total mass the envelope can hold, `sum_j P_j cap_j`.
    pub fn capacity(&self) -> f64 {
        self.cursors
            .iter()
            .filter(|c| c.prob > PROB_EPS)
            .map(|c| c.prob * c.cap)
            .sum()
    }
}

impl Iterator for GreedyMerge<'_> {
    type Item = Piece;

    fn next(&mut self) -> Option<Piece> {
        let mut best: Option<(usize, f64)> = None;
        for (j, c) in self.cursors.iter().enumerate() {
            if c.prob <= PROB_EPS || c.exhausted() {
                continue;
            }
            let s = c.curve.slope(c.seg);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((j, s));
            }
        }
        let (j, slope) = best?;
        let c = &mut self.cursors[j];
        let start = c.curve.knots[c.seg];
        let u_end = c.curve.knots[c.seg + 1].min(c.cap);
        c.seg += 1;
        Some(Piece { term: j, slope, mass: c.prob * (u_end - start), u_end })
    }
}

/// Solve the envelope problem by greedy marginal allocation.
///
/// When `y` exceeds the envelope capacity (`budget < y`) the density set is
/// empty and the backup falls back to the plain expectation, `xi = 1`.
pub fn inner_max(problem: &EnvelopeProblem<'_>) -> Result<EnvelopeSolution> {
    let y = problem.y;
    if !(y > 0.0 && y.is_finite()) {
        return Err(Error::domain(format!("envelope level {y} must be positive")));
    }
    if !(problem.budget >= 1.0) {
        return Err(Error::domain(format!("budget {} must be >= 1", problem.budget)));
    }
    for term in &problem.terms {
        if term.curve.values[0] != 0.0 {
            return Err(Error::Numeric(format!(
                "curve of successor {} does not vanish at 0",
                term.state
            )));
        }
        if let Some((node, excess)) = term.curve.first_convex_kink() {
            return Err(Error::Numeric(format!(
                "curve of successor {} is not concave at knot {node} (slope rises by {excess:e})",
                term.state
            )));
        }
    }
    let merge = GreedyMerge::new(problem.terms.iter().map(|t| (t.prob, t.curve)), problem.budget);
    if !fits(merge.capacity(), y) {
        if let Some(t) = problem.terms.iter().find(|t| t.prob > PROB_EPS && t.curve.end() < y) {
            return Err(Error::domain(format!(
                "level {y} beyond the curve of successor {}",
                t.state
            )));
        }
        let value = problem.terms.iter().map(|t| t.prob * t.curve.eval(y)).sum::<f64>() / y;
        return Ok(EnvelopeSolution {
            value,
            xi: vec![1.0; problem.terms.len()],
            expectation_fallback: true,
        });
    }
    let u = allocate(merge, problem.terms.len(), y);
    let value = problem
        .terms
        .iter()
        .zip(&u)
        .map(|(t, u)| t.prob * t.curve.eval(*u))
        .sum::<f64>()
        / y;
    Ok(EnvelopeSolution {
        value,
        xi: u.iter().map(|u| u / y).collect(),
        expectation_fallback: false,
    })
}

/// Per-term allocation `u_j` after pouring mass `y`.
fn allocate(merge: GreedyMerge<'_>, n_terms: usize, y: f64) -> Vec<f64> {
    let probs: SmallVec<[f64; 8]> = merge.cursors.iter().map(|c| c.prob).collect();
    let mut u = vec![0.0; n_terms];
    let mut need = y;
    for piece in merge {
        if need <= 0.0 {
            break;
        }
        if piece.mass <= need {
            u[piece.term] = piece.u_end;
            need -= piece.mass;
        } else {
            u[piece.term] += need / probs[piece.term];
            need = 0.0;
        }
    }
    u
}

/// The optimal envelope value as a function of the level: breakpoints
/// `(mass, sum_j P_j g_j(u_j))` of the greedy fill, for all `y` at once.
#[derive(Debug, Clone, Default)]
pub(crate) struct Profile {
    mass: SmallVec<[f64; 96]>,
    value: SmallVec<[f64; 96]>,
}

impl Profile {
    pub fn rebuild(&mut self, merge: GreedyMerge<'_>) {
        self.mass.clear();
        self.value.clear();
        self.mass.push(0.0);
        self.value.push(0.0);
        let (mut m, mut f) = (0.0, 0.0);
        for piece in merge {
            if piece.mass <= 0.0 {
                continue;
            }
            m += piece.mass;
            f += piece.slope * piece.mass;
            self.mass.push(m);
            self.value.push(f);
        }
    }

    pub fn capacity(&self) -> f64 {
        self.mass[self.mass.len() - 1]
    }

    /// Optimal `sum_j P_j g_j(u_j)` at total mass `y`, for ascending `ys`.
    pub fn eval_ascending(&self, ys: &[f64], out: &mut [f64]) {
        let last = self.mass.len() - 1;
        let mut k = 0;
        for (y, o) in ys.iter().zip(out.iter_mut()) {
            while k < last && self.mass[k + 1] < *y {
                k += 1;
            }
            *o = if k == last {
                self.value[last]
            } else {
                let (m0, m1) = (self.mass[k], self.mass[k + 1]);
                let t = ((y - m0) / (m1 - m0)).clamp(0.0, 1.0);
                self.value[k] + (self.value[k + 1] - self.value[k]) * t
            };
        }
    }
}
