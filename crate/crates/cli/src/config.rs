//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use neurowalk::dynamics::{Anthropometry, ContactParams, JointLimits, Model};
use neurowalk::muscle::MuscleSet;
use neurowalk::optimizer::{Mode, OptimizeConfig};
use neurowalk::reflex::{ControlParams, ParamBounds, ReflexConstants};
use neurowalk::simulation::{SimConfig, StepDownConfig, Walker};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSection {
    pub defaults: ControlParams,
    pub bounds: ParamBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSection {
    pub mode: Mode,
    pub budget: u64,
    pub seed: u64,
    pub sigma0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<usize>,
}

/// Everything a run depends on. Every table must be present; nothing is
/// filled in silently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub anthropometry: Anthropometry,
    pub contact: ContactParams,
    pub limits: JointLimits,
    pub muscles: MuscleSet,
    pub reflex: ReflexConstants,
    pub controller: ControllerSection,
    pub simulation: SimConfig,
    pub optimizer: OptimizerSection,
    pub robustness: StepDownConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let defaults = ControlParams::default();
        Self {
            output_dir: PathBuf::from("out"),
            anthropometry: Anthropometry::default(),
            contact: ContactParams::default(),
            limits: JointLimits::default(),
            muscles: MuscleSet::default(),
            reflex: ReflexConstants::default(),
            controller: ControllerSection { defaults, bounds: ParamBounds::around(&defaults) },
            simulation: SimConfig::default(),
            optimizer: OptimizerSection { mode: Mode::MinR2, budget: 2000, seed: 1, sigma0: 0.1, lambda: None },
            robustness: StepDownConfig::default(),
        }
    }
}

/// Dotted paths present in `reference` but absent from `given`.
fn missing_keys(reference: &toml::Value, given: &toml::Value, prefix: &str, out: &mut Vec<String>) {
    let (toml::Value::Table(r), toml::Value::Table(g)) = (reference, given) else { return };
    for (k, rv) in r {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match g.get(k) {
            None => out.push(path),
            Some(gv) => missing_keys(rv, gv, &path, out),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let given: toml::Value = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let reference = toml::Value::try_from(RunConfig::default()).map_err(|e| CliError::Config(e.to_string()))?;
        let mut missing = Vec::new();
        missing_keys(&reference, &given, "", &mut missing);
        if !missing.is_empty() {
            return Err(CliError::MissingKeys(missing));
        }
        let cfg: RunConfig = given.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable in TOML")
    }

    pub fn validate(&self) -> CliResult<()> {
        self.controller.bounds.validate()?;
        if !self.controller.bounds.contains(&self.controller.defaults) {
            return Err(CliError::Config("controller.defaults lie outside controller.bounds".into()));
        }
        if !(self.simulation.t_max > 0.0 && self.simulation.sample_rate > 0.0) {
            return Err(CliError::Config("simulation.t_max and simulation.sample_rate must be positive".into()));
        }
        if !(self.optimizer.sigma0 > 0.0 && self.optimizer.budget > 0) {
            return Err(CliError::Config("optimizer.sigma0 and optimizer.budget must be positive".into()));
        }
        self.walker()?;
        Ok(())
    }

    pub fn walker(&self) -> CliResult<Walker> {
        let model = Model::with_params(self.anthropometry, self.contact, self.limits)?;
        Ok(Walker::new(model, self.muscles.clone(), self.reflex, self.simulation)?)
    }

    pub fn optimize_config(&self) -> OptimizeConfig {
        OptimizeConfig {
            mode: self.optimizer.mode,
            budget: self.optimizer.budget,
            seed: self.optimizer.seed,
            sigma0: self.optimizer.sigma0,
            t_max: self.simulation.t_max,
            lambda: self.optimizer.lambda,
            ..OptimizeConfig::default()
        }
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}
