use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Mdp;
use crate::error::{Error, Result};
use crate::riskcore;

/// How the transition kernel may deviate from the nominal one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AmbiguitySpec {
    /// Nominal kernel only.
    #[default]
    None,
    /// `P~/P <= K` for every state-action pair.
    RnFixed {
        #[serde(alias = "K")]
        k: f64,
    },
    /// `KL(P~, P) <= ln kappa` for every state-action pair.
    KlFixed { kappa: f64 },
    /// `P~/P <= kappa(x, a)` with `1 <= kappa(x, a) <= k_max`.
    RnDecisionDependent {
        budget: BudgetField,
        /// Defaults to the largest budget in the field.
        #[serde(default, alias = "K_max", skip_serializing_if = "Option::is_none")]
        k_max: Option<f64>,
    },
}

/// Source of a decision-dependent budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BudgetField {
    /// `table[x][a]`, shaped like the MDP.
    Table(Vec<Vec<f64>>),
    /// Independent uniform draws in `[low, high]`, state-major, from `seed`.
    Uniform { low: f64, high: f64, seed: u64 },
}

/// A budget resolved against a concrete MDP.
#[derive(Debug, Clone, PartialEq)]
pub enum Budget {
    Constant(f64),
    Field { kappa: Vec<Vec<f64>>, k_max: f64 },
}

impl Budget {
    pub fn kappa(&self, state: usize, action: usize) -> f64 {
        match self {
            Budget::Constant(k) => *k,
            Budget::Field { kappa, .. } => kappa[state][action],
        }
    }

    pub fn k_max(&self) -> f64 {
        match self {
            Budget::Constant(k) => *k,
            Budget::Field { k_max, .. } => *k_max,
        }
    }

    /// Upper end of the confidence-level axis needed by this budget.
    pub fn y_max(&self) -> f64 {
        self.k_max().max(1.0)
    }
}

impl AmbiguitySpec {
    /// Check the spec on its own, without an MDP.
    pub fn validate(&self) -> Result<()> {
        match self {
            AmbiguitySpec::None => Ok(()),
            AmbiguitySpec::RnFixed { k } => check_budget("K", *k),
            AmbiguitySpec::KlFixed { kappa } => check_budget("kappa", *kappa),
            AmbiguitySpec::RnDecisionDependent { budget, k_max } => {
                if let Some(k) = k_max {
                    check_budget("k_max", *k)?;
                }
                if let BudgetField::Uniform { low, high, .. } = budget {
                    check_budget("low", *low)?;
                    if !(high >= low && high.is_finite()) {
                        return Err(Error::validation(format!("budget range [{low}, {high}] is empty")));
                    }
                    if let Some(k) = k_max {
                        if high > k {
                            return Err(Error::validation(format!("budget high {high} exceeds k_max {k}")));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// Confidence level of the equivalent fixed-budget problem, when one exists.
    pub fn reduced_alpha(&self, alpha: f64) -> Result<Option<f64>> {
        match self {
            AmbiguitySpec::None => Ok(Some(alpha)),
            AmbiguitySpec::RnFixed { k } => riskcore::rn_reduction(alpha, *k).map(Some),
            AmbiguitySpec::KlFixed { kappa } => riskcore::kl_reduction(alpha, *kappa).map(Some),
            AmbiguitySpec::RnDecisionDependent { .. } => Ok(None),
        }
    }

    /// Resolve into per state-action budgets for `mdp`.
    pub fn resolve(&self, mdp: &Mdp) -> Result<Budget> {
        self.validate()?;
        match self {
            AmbiguitySpec::None => Ok(Budget::Constant(1.0)),
            AmbiguitySpec::RnFixed { k } => Ok(Budget::Constant(*k)),
            AmbiguitySpec::KlFixed { kappa } => Err(Error::Unsupported(format!(
                "KL budget kappa = {kappa} reduces to an EVaR problem, which this solver does not handle"
            ))),
            AmbiguitySpec::RnDecisionDependent { budget, k_max } => {
                let kappa = match budget {
                    BudgetField::Table(table) => {
                        if table.len() != mdp.n_states()
                            || table.iter().zip(&mdp.states).any(|(t, s)| t.len() != s.len())
                        {
                            return Err(Error::validation("budget table shape does not match the MDP"));
                        }
                        table.clone()
                    }
                    BudgetField::Uniform { low, high, seed } => {
                        let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                        mdp.states
                            .iter()
                            .map(|actions| {
                                actions
                                    .iter()
                                    .map(|_| low + (high - low) * rng.gen::<f64>())
                                    .collect()
                            })
                            .collect()
                    }
                };
                let top = kappa.iter().flatten().cloned().fold(1.0, f64::max);
                let k_max = k_max.unwrap_or(top);
                for (x, row) in kappa.iter().enumerate() {
                    for (a, k) in row.iter().enumerate() {
                        if !(*k >= 1.0 && *k <= k_max) {
                            return Err(Error::validation(format!(
                                "budget at ({x}, {a}) = {k} outside [1, {k_max}]"
                            )));
                        }
                    }
                }
                Ok(Budget::Field { kappa, k_max })
            }
        }
    }
}

fn check_budget(name: &str, k: f64) -> Result<()> {
    if k >= 1.0 && k.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(format!("{name} = {k} must be >= 1")))
    }
}
