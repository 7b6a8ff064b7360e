//! Exact risk measures on finite distributions.
//!
//! CVaR, EVaR and the budgeted NCVaR envelope, plus the two confidence-level
//! reductions that map a fixed-budget robust CVaR problem onto a plain
//! risk-sensitive one. Outcomes are costs: larger is worse, and every measure
//! here lies between the mean and the maximum outcome.
//!
//! All envelope problems reduce to a fractional knapsack: fill unit
//! probability mass from the largest outcome downward, each outcome holding
//! at most `P(w) * bound(w)`.

use crate::error::{Error, Result};

/// Probabilities at or below this value are treated as zero mass.
pub const PROB_EPS: f64 = 1e-15;

const SUM_TOL: f64 = 1e-12;

/// A finite random variable: outcome values with their probability masses.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    outcomes: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(outcomes: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::validation("distribution has no outcomes"));
        }
        if outcomes.len() != probs.len() {
            return Err(Error::validation(format!(
                "{} outcomes but {} probabilities",
                outcomes.len(),
                probs.len()
            )));
        }
        if let Some(z) = outcomes.iter().find(|z| !z.is_finite()) {
            return Err(Error::validation(format!("non-finite outcome {z}")));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::validation(format!("invalid probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::validation(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(DiscreteDistribution { outcomes, probs })
    }

    /// A point mass at `value`.
    pub fn degenerate(value: f64) -> Result<Self> {
        Self::new(vec![value], vec![1.0])
    }

    /// Equal mass on each outcome.
    pub fn uniform(outcomes: Vec<f64>) -> Result<Self> {
        let n = outcomes.len();
        Self::new(outcomes, vec![1.0 / n as f64; n])
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.outcomes
            .iter()
            .zip(&self.probs)
            .map(|(z, p)| z * p)
            .sum()
    }

    /// Largest outcome carrying non-negligible mass.
    pub fn ess_sup(&self) -> f64 {
        self.support().map(|(z, _)| z).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Mass carried by outcomes equal to the essential supremum.
    fn mass_at_sup(&self) -> f64 {
        let top = self.ess_sup();
        self.support().filter(|(z, _)| *z == top).map(|(_, p)| p).sum()
    }

    fn support(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.outcomes
            .iter()
            .zip(&self.probs)
            .filter(|(_, p)| **p > PROB_EPS)
            .map(|(z, p)| (*z, *p))
    }

    /// Indices sorted by outcome, largest first; equal outcomes keep input order.
    fn descending_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.outcomes[b].total_cmp(&self.outcomes[a]));
        idx
    }
}

/// Per-outcome upper bound on the density ratio `Q(w)/P(w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityBound(Vec<f64>);

impl DensityBound {
    pub fn new(bounds: Vec<f64>) -> Result<Self> {
        if let Some(b) = bounds.iter().find(|b| !(**b >= 0.0)) {
            return Err(Error::validation(format!("density bound {b} is negative")));
        }
        Ok(DensityBound(bounds))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `E_P[bound]`; the envelope is non-empty iff this is at least one.
    pub fn mean_under(&self, dist: &DiscreteDistribution) -> f64 {
        dist.probs
            .iter()
            .zip(&self.0)
            .filter(|(p, _)| **p > PROB_EPS)
            .map(|(p, b)| p * b)
            .sum::<f64>()
    }

    pub fn is_feasible_for(&self, dist: &DiscreteDistribution) -> bool {
        self.0.len() == dist.len() && self.mean_under(dist) >= 1.0 - SUM_TOL
    }
}

/// Per-outcome uncertainty budget with `1 <= kappa <= k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetVector {
    values: Vec<f64>,
    k_max: f64,
}

impl BudgetVector {
    pub fn new(values: Vec<f64>, k_max: f64) -> Result<Self> {
        if !(k_max >= 1.0 && k_max.is_finite()) {
            return Err(Error::validation(format!("k_max = {k_max} must be >= 1")));
        }
        for (i, k) in values.iter().enumerate() {
            if !(*k >= 1.0 && *k <= k_max) {
                return Err(Error::validation(format!(
                    "budget[{i}] = {k} outside [1, {k_max}]"
                )));
            }
        }
        Ok(BudgetVector { values, k_max })
    }

    pub fn constant(kappa: f64, len: usize) -> Result<Self> {
        Self::new(vec![kappa; len], kappa)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn k_max(&self) -> f64 {
        self.k_max
    }
}

/// Optimal value of an envelope problem together with one maximizing density.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub value: f64,
    /// `Q(w)/P(w)` for each outcome, aligned with the distribution.
    pub density: Vec<f64>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("confidence level {alpha} not in (0, 1]")))
    }
}

/// `sup E_Q[Z]` over densities `0 <= Q/P <= bound` with unit mass.
pub fn envelope_max(dist: &DiscreteDistribution, bound: &DensityBound) -> Result<DualSolution> {
    if bound.0.len() != dist.len() {
        return Err(Error::validation(format!(
            "density bound has {} entries for {} outcomes",
            bound.0.len(),
            dist.len()
        )));
    }
    if !bound.is_feasible_for(dist) {
        return Err(Error::validation(format!(
            "envelope is empty: E_P[bound] = {} < 1",
            bound.mean_under(dist)
        )));
    }
    let mut density = vec![0.0; dist.len()];
    let mut filled = 0.0;
    let mut value = 0.0;
    for i in dist.descending_order() {
        let p = dist.probs[i];
        if p <= PROB_EPS {
            continue;
        }
        let room = 1.0 - filled;
        if room <= 0.0 {
            break;
        }
        let cap = p * bound.0[i];
        let mass = cap.min(room);
        density[i] = if mass == cap { bound.0[i] } else { mass / p };
        value += mass * dist.outcomes[i];
        filled += mass;
    }
    Ok(DualSolution { value, density })
}

/// Conditional value-at-risk: the mean of the worst `alpha` fraction of
/// outcomes. Evaluated through the minimization form at its optimal
/// threshold (the upper `alpha`-quantile).
pub fn cvar(dist: &DiscreteDistribution, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let order = dist.descending_order();
    let mut tail = 0.0;
    let mut threshold = dist.ess_sup();
    for &i in &order {
        let p = dist.probs[i];
        if p <= PROB_EPS {
            continue;
        }
        threshold = dist.outcomes[i];
        tail += p;
        if tail >= alpha {
            break;
        }
    }
    let excess: f64 = dist
        .support()
        .map(|(z, p)| p * (z - threshold).max(0.0))
        .sum();
    Ok(threshold + excess / alpha)
}

/// CVaR through its dual envelope `{0 <= Q/P <= 1/alpha}`.
pub fn cvar_dual(dist: &DiscreteDistribution, alpha: f64) -> Result<DualSolution> {
    check_alpha(alpha)?;
    let bound = DensityBound(vec![1.0 / alpha; dist.len()]);
    envelope_max(dist, &bound)
}

/// NCVaR with a per-outcome budget: the envelope caps `Q/P` at `kappa(w)/alpha`.
pub fn ncvar(
    dist: &DiscreteDistribution,
    alpha: f64,
    kappa: &BudgetVector,
) -> Result<DualSolution> {
    check_alpha(alpha)?;
    if kappa.values.len() != dist.len() {
        return Err(Error::validation(format!(
            "budget has {} entries for {} outcomes",
            kappa.values.len(),
            dist.len()
        )));
    }
    let bound = DensityBound(kappa.values.iter().map(|k| k / alpha).collect());
    envelope_max(dist, &bound)
}

const EVAR_T_FLOOR: f64 = 1e-8;
const EVAR_MAX_ITERS: usize = 400;

/// `(ln M_Z(t) - ln alpha) / t`, evaluated stably around the supremum.
fn evar_objective(dist: &DiscreteDistribution, top: f64, log_alpha: f64, t: f64) -> f64 {
    let shifted: f64 = dist
        .support()
        .map(|(z, p)| p * (t * (z - top)).exp_m1())
        .sum();
    top + (shifted.ln_1p() - log_alpha) / t
}

/// Entropic value-at-risk, `inf_{t>0} (ln M_Z(t) - ln alpha)/t`.
pub fn evar(dist: &DiscreteDistribution, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if alpha == 1.0 {
        return Ok(dist.mean());
    }
    let top = dist.ess_sup();
    // The point mass on the supremum is inside the KL ball: the infimum sits at t -> inf.
    if dist.mass_at_sup() >= alpha {
        return Ok(top);
    }
    let bottom = dist.support().map(|(z, _)| z).fold(f64::INFINITY, f64::min);
    let scale = 1.0 / (top - bottom);
    let log_alpha = alpha.ln();
    let f = |log_t: f64| evar_objective(dist, top, log_alpha, log_t.exp());

    let growth = 4f64.ln();
    let floor = (EVAR_T_FLOOR * scale).ln();
    let mut prev2 = floor;
    let mut prev = scale.ln();
    let mut f_prev = f(prev);
    let mut hi = prev + growth;
    let mut f_hi = f(hi);
    let mut grown = 0;
    while f_hi <= f_prev {
        grown += 1;
        if grown > EVAR_MAX_ITERS {
            return Err(Error::Numeric(
                "EVaR bracket did not close while growing t".into(),
            ));
        }
        prev2 = prev;
        prev = hi;
        f_prev = f_hi;
        hi += growth;
        f_hi = f(hi);
    }
    let mut lo = if grown == 0 { floor } else { prev2 };

    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    let mut best = f_prev.min(fa).min(fb);
    for _ in 0..EVAR_MAX_ITERS {
        if hi - lo < 1e-11 {
            return Ok(best);
        }
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INV_PHI * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INV_PHI * (hi - lo);
            fb = f(b);
        }
        best = best.min(fa).min(fb);
    }
    Err(Error::Numeric(format!(
        "EVaR golden-section search did not converge (bracket width {})",
        hi - lo
    )))
}

/// Radon-Nikodym budget `K` folded into the confidence level: `alpha / K`.
pub fn rn_reduction(alpha: f64, k: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(k >= 1.0 && k.is_finite()) {
        return Err(Error::domain(format!("budget K = {k} must be >= 1")));
    }
    Ok(alpha / k)
}

/// KL budget `ln kappa` folded into the EVaR level: `alpha / kappa^(1/alpha)`.
pub fn kl_reduction(alpha: f64, kappa: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::domain(format!("budget kappa = {kappa} must be >= 1")));
    }
    Ok(alpha * (-kappa.ln() / alpha).exp())
}

/// Empirical distribution of a sample, merging repeated values.
pub fn empirical_distribution(samples: &[f64]) -> Result<DiscreteDistribution> {
    if samples.is_empty() {
        return Err(Error::validation("empty sample"));
    }
    if let Some(s) = samples.iter().find(|s| !s.is_finite()) {
        return Err(Error::validation(format!("non-finite sample {s}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut outcomes = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for s in sorted {
        match outcomes.last() {
            Some(&last) if last == s => *counts.last_mut().unwrap() += 1,
            _ => {
                outcomes.push(s);
                counts.push(1);
            }
        }
    }
    let probs = counts.into_iter().map(|c| c as f64 / n).collect();
    DiscreteDistribution::new(outcomes, probs)
}
