//! Experiment configuration: one JSON file drives every subcommand.

use std::path::{Path, PathBuf};

use rcvar_core::mdp::{AmbiguitySpec, GridSpec};
use rcvar_core::solver::make_ygrid;
use rcvar_core::{json, Error, Result, SolveOptions};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub ambiguity: AmbiguitySpec,
    /// Confidence level of the objective, in (0, 1].
    pub alpha: f64,
    pub ygrid: YGridConfig,
    pub solver: SolveOptions,
    pub rollout: RolloutSettings,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct YGridConfig {
    pub n: usize,
    pub y_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutSettings {
    pub episodes: usize,
    pub horizon: usize,
    /// Episode seed; `--seed` overrides it.
    pub seed: u64,
    pub bootstrap: usize,
    /// Number of kernels drawn inside the ambiguity set.
    pub kernels: u64,
    /// Kernel `k` is drawn from seed `kernel_seed + k`.
    pub kernel_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid: GridSpec::default(),
            ambiguity: AmbiguitySpec::default(),
            alpha: 0.48,
            ygrid: YGridConfig::default(),
            solver: SolveOptions::default(),
            rollout: RolloutSettings::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl Default for YGridConfig {
    fn default() -> Self {
        YGridConfig { n: 21, y_min: 1e-4 }
    }
}

impl Default for RolloutSettings {
    fn default() -> Self {
        RolloutSettings { episodes: 10_000, horizon: 400, seed: 0, bootstrap: 200, kernels: 20, kernel_seed: 1000 }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        json::read_file(path)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Validation(format!("alpha {} not in (0, 1]", self.alpha)));
        }
        self.grid.validate()?;
        self.ambiguity.validate()?;
        make_ygrid(self.ygrid.n, self.ygrid.y_min, 1.0)?;
        if !(self.solver.epsilon > 0.0) {
            return Err(Error::Validation(format!("solver epsilon {} must be positive", self.solver.epsilon)));
        }
        if self.solver.max_sweeps == 0 {
            return Err(Error::Validation("solver max_sweeps must be positive".into()));
        }
        let r = &self.rollout;
        if r.episodes == 0 {
            return Err(Error::Validation("rollout episodes must be positive".into()));
        }
        if r.horizon == 0 {
            return Err(Error::Validation("rollout horizon must be positive".into()));
        }
        if r.bootstrap < 2 {
            return Err(Error::Validation("rollout bootstrap needs at least two resamples".into()));
        }
        Ok(())
    }
}
