//! Independent reference implementations and random instance generators
//! shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcvar_core::mdp::{ActionRow, Mdp, Successor};
use rcvar_core::riskcore::{cvar, DiscreteDistribution};
use rcvar_core::solver::{Curve, EnvelopeProblem, EnvelopeTerm, YGrid};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random probability vector of length `n` with all entries positive.
pub fn simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln() + 1e-3).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

/// Distribution with 1..=`max_n` outcomes, occasional ties and zero-mass atoms.
pub fn random_distribution(rng: &mut impl Rng, max_n: usize) -> DiscreteDistribution {
    let n = rng.gen_range(1..=max_n);
    let outcomes: Vec<f64> = (0..n)
        .map(|_| {
            if rng.gen_bool(0.3) {
                rng.gen_range(-3..=3) as f64
            } else {
                rng.gen_range(-10.0..15.0)
            }
        })
        .collect();
    let mut probs = simplex(rng, n);
    if n > 1 && rng.gen_bool(0.1) {
        let j = rng.gen_range(0..n);
        let moved = probs[j];
        probs[j] = 0.0;
        probs[(j + 1) % n] += moved;
    }
    DiscreteDistribution::new(outcomes, probs).unwrap()
}

/// `n` states, 1..=3 actions each, 1..=3 successors per action, costs in `[0, 1)`.
pub fn random_mdp(rng: &mut impl Rng, n: usize, gamma: f64) -> Mdp {
    let states = (0..n)
        .map(|_| {
            (0..rng.gen_range(1..=3))
                .map(|_| {
                    let k = rng.gen_range(1..=3.min(n));
                    let mut targets: Vec<usize> = (0..n).collect();
                    for i in 0..k {
                        let j = rng.gen_range(i..n);
                        targets.swap(i, j);
                    }
                    targets.truncate(k);
                    let probs = simplex(rng, k);
                    ActionRow::new(
                        rng.gen::<f64>(),
                        targets.into_iter().zip(probs).map(|(state, prob)| Successor { state, prob }).collect(),
                    )
                })
                .collect()
        })
        .collect();
    Mdp { gamma, start_state: 0, goal_states: vec![], states, layout: None }
}

/// Plain expected-cost value iteration to a residual below `tol`.
pub fn risk_neutral_vi(mdp: &Mdp, tol: f64) -> Vec<f64> {
    let mut v = vec![0.0; mdp.n_states()];
    loop {
        let next: Vec<f64> = mdp
            .states
            .iter()
            .map(|acts| {
                acts.iter()
                    .map(|row| row.cost + mdp.gamma * row.next.iter().map(|s| s.prob * v[s.state]).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let res = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if res < tol {
            return v;
        }
    }
}

/// `max sum_j p_j g_j(u_j)` s.t. `sum_j p_j u_j = y`, `0 <= u_j <= cap_j`, for
/// concave piecewise-linear `g_j`, via its Lagrangian dual: the dual function
/// is convex and piecewise linear in the multiplier, with kinks only at
/// segment slopes, so minimizing over those slopes is exact.
pub fn lagrangian_inner(y: f64, probs: &[f64], caps: &[f64], knots: &[Vec<f64>], values: &[Vec<f64>]) -> f64 {
    let restricted: Vec<(Vec<f64>, Vec<f64>)> = (0..probs.len())
        .map(|j| {
            let mut us = Vec::new();
            let mut gs = Vec::new();
            for (k, &u) in knots[j].iter().enumerate() {
                if u < caps[j] {
                    us.push(u);
                    gs.push(values[j][k]);
                }
            }
            us.push(caps[j]);
            gs.push(piecewise(&knots[j], &values[j], caps[j]));
            (us, gs)
        })
        .collect();
    let mut lambdas = Vec::new();
    for (us, gs) in &restricted {
        for k in 0..us.len() - 1 {
            if us[k + 1] > us[k] {
                lambdas.push((gs[k + 1] - gs[k]) / (us[k + 1] - us[k]));
            }
        }
    }
    if lambdas.is_empty() {
        lambdas.push(0.0);
    }
    lambdas
        .iter()
        .map(|&lam| {
            lam * y
                + restricted
                    .iter()
                    .zip(probs)
                    .map(|((us, gs), p)| {
                        p * us.iter().zip(gs).map(|(u, g)| g - lam * u).fold(f64::NEG_INFINITY, f64::max)
                    })
                    .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Linear interpolation through `(knots, values)`, clamped at both ends.
pub fn piecewise(knots: &[f64], values: &[f64], u: f64) -> f64 {
    if u <= knots[0] {
        return values[0];
    }
    for k in 0..knots.len() - 1 {
        if u <= knots[k + 1] {
            let t = (u - knots[k]) / (knots[k + 1] - knots[k]);
            return values[k] + t * (values[k + 1] - values[k]);
        }
    }
    values[values.len() - 1]
}

/// Interpolated CVaR value iteration (unit budget, grid ending at 1), written
/// without the solver's greedy allocation: the inner problem goes through
/// [`lagrangian_inner`]. Rows of the result are states, columns grid nodes.
pub fn reference_cvar_vi(mdp: &Mdp, ygrid: &YGrid, tol: f64) -> Vec<Vec<f64>> {
    assert_eq!(ygrid.y_max(), 1.0);
    let nodes = ygrid.nodes().to_vec();
    let n = nodes.len();
    let mut v = vec![vec![0.0; n]; mdp.n_states()];
    loop {
        let w: Vec<Vec<f64>> = v.iter().map(|row| row.iter().zip(&nodes).map(|(v, y)| v * y).collect()).collect();
        let next: Vec<Vec<f64>> = (0..mdp.n_states())
            .map(|x| {
                (0..n)
                    .map(|i| {
                        mdp.actions(x)
                            .iter()
                            .map(|row| {
                                let tail = if i == 0 {
                                    row.next.iter().map(|s| v[s.state][0]).fold(f64::NEG_INFINITY, f64::max)
                                } else {
                                    let probs: Vec<f64> = row.next.iter().map(|s| s.prob).collect();
                                    let caps = vec![1.0; probs.len()];
                                    let knots = vec![nodes.clone(); probs.len()];
                                    let values: Vec<Vec<f64>> = row.next.iter().map(|s| w[s.state].clone()).collect();
                                    lagrangian_inner(nodes[i], &probs, &caps, &knots, &values) / nodes[i]
                                };
                                row.cost + mdp.gamma * tail
                            })
                            .fold(f64::INFINITY, f64::min)
                    })
                    .collect()
            })
            .collect();
        let res = next
            .iter()
            .flatten()
            .zip(v.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if res < tol {
            return v;
        }
    }
}

/// Random concave piecewise-linear curve through `knots` with value 0 at 0.
pub fn random_concave(rng: &mut impl Rng, knots: &[f64]) -> Vec<f64> {
    let mut slopes: Vec<f64> = (0..knots.len() - 1).map(|_| rng.gen_range(-2.0..20.0)).collect();
    slopes.sort_by(|a, b| b.total_cmp(a));
    let mut values = vec![0.0];
    for k in 0..slopes.len() {
        values.push(values[k] + slopes[k] * (knots[k + 1] - knots[k]));
    }
    values
}

/// An envelope problem with owned curves.
pub struct OwnedEnvelope {
    pub y: f64,
    pub budget: f64,
    pub probs: Vec<f64>,
    pub knots: Vec<f64>,
    pub curves: Vec<Vec<f64>>,
}

impl OwnedEnvelope {
    pub fn problem(&self) -> EnvelopeProblem<'_> {
        EnvelopeProblem {
            y: self.y,
            budget: self.budget,
            terms: self
                .probs
                .iter()
                .zip(&self.curves)
                .enumerate()
                .map(|(j, (&prob, values))| EnvelopeTerm {
                    state: j,
                    prob,
                    curve: Curve::new(&self.knots, values).unwrap(),
                })
                .collect(),
        }
    }

    fn objective(&self, xi: &[f64]) -> f64 {
        self.probs
            .iter()
            .zip(&self.curves)
            .zip(xi)
            .map(|((p, c), xi)| p * piecewise(&self.knots, c, self.y * xi))
            .sum::<f64>()
            / self.y
    }
}

/// Random envelope with 1..=3 successors on a geometric grid; about one in
/// eight levels exceeds the budget to exercise the expectation fallback.
pub fn random_envelope(rng: &mut impl Rng) -> OwnedEnvelope {
    let y_max = rng.gen_range(1.0..3.0);
    let grid = YGrid::new(rng.gen_range(3..=7), rng.gen_range(0.01..0.5), y_max).unwrap();
    let knots = grid.nodes().to_vec();
    let m = rng.gen_range(1..=3);
    let budget = rng.gen_range(1.0..=y_max);
    let y = if rng.gen_bool(0.125) && budget < y_max {
        rng.gen_range(budget..=y_max)
    } else {
        rng.gen_range(0.0..budget).max(1e-3)
    };
    OwnedEnvelope {
        y,
        budget,
        probs: simplex(rng, m),
        curves: (0..m).map(|_| random_concave(rng, &knots)).collect(),
        knots,
    }
}

/// Brute force over a grid of feasible densities. The grid on each axis holds
/// `per_axis` evenly spaced points plus every breakpoint `knot / y` and the
/// cap, and one successor at a time absorbs the mean constraint.
pub fn brute_force_envelope(env: &OwnedEnvelope, per_axis: usize) -> f64 {
    let m = env.probs.len();
    let y = env.y;
    let caps: Vec<f64> = (0..m).map(|_| env.budget.min(env.knots[env.knots.len() - 1]) / y).collect();
    let capacity: f64 = env.probs.iter().zip(&caps).map(|(p, c)| p * c).sum();
    if capacity < 1.0 {
        return env.objective(&vec![1.0; m]);
    }
    let axis = |cap: f64| -> Vec<f64> {
        let mut pts: Vec<f64> = (0..per_axis).map(|k| cap * k as f64 / (per_axis - 1) as f64).collect();
        pts.extend(env.knots.iter().map(|u| u / y).filter(|&xi| xi <= cap));
        pts
    };
    let axes: Vec<Vec<f64>> = caps.iter().map(|&c| axis(c)).collect();
    let mut best = f64::NEG_INFINITY;
    let mut xi = vec![0.0; m];
    for free in 0..m {
        let others: Vec<usize> = (0..m).filter(|&j| j != free).collect();
        let mut idx = vec![0usize; others.len()];
        loop {
            let mut used = 0.0;
            for (k, &j) in others.iter().enumerate() {
                xi[j] = axes[j][idx[k]];
                used += env.probs[j] * xi[j];
            }
            let rest = (1.0 - used) / env.probs[free];
            if rest >= -1e-12 && rest <= caps[free] + 1e-12 {
                xi[free] = rest.clamp(0.0, caps[free]);
                best = best.max(env.objective(&xi));
            }
            // Odometer over the other axes.
            let mut k = 0;
            while k < idx.len() {
                idx[k] += 1;
                if idx[k] < axes[others[k]].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                break;
            }
        }
    }
    best
}

/// Two-stage cost tree: pay `root_cost`, move to leaf `j` with probability
/// `probs[j]`, then pay a cost drawn from `leaves[j]`, discounted by `gamma`.
pub struct Tree {
    pub root_cost: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub probs: Vec<f64>,
    pub leaves: Vec<DiscreteDistribution>,
}

pub fn random_tree(rng: &mut impl Rng) -> Tree {
    let m = rng.gen_range(1..=4);
    Tree {
        root_cost: rng.gen_range(0.0..5.0),
        gamma: rng.gen_range(0.5..1.0),
        kappa: rng.gen_range(1.0..4.0),
        probs: simplex(rng, m),
        leaves: (0..m).map(|_| random_distribution(rng, 5)).collect(),
    }
}

impl Tree {
    /// Distribution of the total discounted cost.
    pub fn total(&self) -> DiscreteDistribution {
        let mut outcomes = Vec::new();
        let mut probs = Vec::new();
        for (p, leaf) in self.probs.iter().zip(&self.leaves) {
            for (z, q) in leaf.outcomes().iter().zip(leaf.probs()) {
                outcomes.push(self.root_cost + self.gamma * z);
                probs.push(p * q);
            }
        }
        let s: f64 = probs.iter().sum();
        DiscreteDistribution::new(outcomes, probs.iter().map(|p| p / s).collect()).unwrap()
    }

    /// Exact curve `u -> u * NCVaR_u(leaf)` on `[0, kappa]`, with a knot at
    /// every point where the tail quantile changes.
    pub fn leaf_curve(&self, j: usize) -> (Vec<f64>, Vec<f64>) {
        let leaf = &self.leaves[j];
        let mut order: Vec<usize> = (0..leaf.len()).collect();
        order.sort_by(|&a, &b| leaf.outcomes()[b].total_cmp(&leaf.outcomes()[a]));
        let mut knots = vec![0.0];
        let mut values = vec![0.0];
        let mut mass = 0.0;
        for &k in &order {
            let p = leaf.probs()[k];
            if p <= 0.0 {
                continue;
            }
            mass = (mass + p).min(1.0);
            let u = self.kappa * mass;
            if u > knots[knots.len() - 1] {
                knots.push(u);
                values.push(u * cvar(leaf, mass).unwrap());
            }
        }
        let last = knots.len() - 1;
        knots[last] = self.kappa;
        values[last] = self.kappa * leaf.mean();
        (knots, values)
    }
}
