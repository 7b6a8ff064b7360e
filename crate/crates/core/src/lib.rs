//! Robust CVaR risk-sensitive planning on tabular MDPs.
//!
//! - [`riskcore`]: exact CVaR, EVaR and NCVaR on discrete distributions and
//!   the fixed-budget confidence-level reductions.
//! - [`mdp`]: the MDP model, ambiguity specifications and the grid world.
//! - [`solver`]: value iteration on the augmented `(state, confidence level)`
//!   space with linear interpolation in the level.
//! - [`rollout`]: Monte-Carlo evaluation of solved policies under nominal,
//!   sampled and adversarial kernels.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod json;
pub mod mdp;
pub mod riskcore;
pub mod rollout;
pub mod solver;

pub use error::{Error, Result};
pub use mdp::{AmbiguitySpec, Budget, GridSpec, Mdp};
pub use riskcore::DiscreteDistribution;
pub use solver::{SolveOptions, SolveResult, ValueFunction, YGrid};
