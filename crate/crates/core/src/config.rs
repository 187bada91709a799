//! Experiment configuration files (TOML).
//!
//! ```toml
//! [scenario]            # grid, teams, unit stats; all optional
//! episode_limit = 120
//!
//! [critic]              # either a preset personality or explicit weights
//! personality = "neutral"
//! # weights = [1.0, -1.0, -1.0]   # [battle won, shield lost, hp lost]
//!
//! [learner]
//! algorithm = "qmix"    # qmix | iql | qtran
//!
//! [run]
//! total_steps = 50000
//! eval_period = 5000
//! eval_episodes = 32
//! seed = 0
//! output_dir = "runs"
//! ```
//!
//! Unknown keys are rejected. Preset weights come from the row of the
//! configured algorithm.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::critic::{InnateValueProfile, Personality};
use crate::env::ScenarioConfig;
use crate::error::{Error, Result};
use crate::harness::RunConfig;
use crate::learners::LearnerConfig;

/// Environment variable that overrides `run.output_dir`.
pub const OUTPUT_DIR_ENV: &str = "IVRL_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticConfig {
    pub personality: Option<Personality>,
    /// `[battle won, shield lost, hp lost]`.
    pub weights: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub total_steps: u64,
    pub eval_period: u64,
    pub eval_episodes: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub eval_threads: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            total_steps: 50_000,
            eval_period: 5_000,
            eval_episodes: 32,
            seed: 0,
            output_dir: PathBuf::from("runs"),
            eval_threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub critic: CriticConfig,
    pub learner: LearnerConfig,
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(&e))))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// The profile every ally uses.
    pub fn profile(&self) -> Result<InnateValueProfile<f64>> {
        match (self.critic.personality, self.critic.weights) {
            (Some(_), Some(_)) => Err(Error::Config(
                "critic: set either `personality` or `weights`, not both".into(),
            )),
            (None, Some(w)) => InnateValueProfile::custom(w)
                .map_err(|e| Error::Config(format!("critic.weights: {}", strip_prefix(&e)))),
            (Some(Personality::Custom), None) => Err(Error::Config(
                "critic.personality: `custom` needs explicit `weights`".into(),
            )),
            (p, None) => {
                InnateValueProfile::preset(self.learner.algorithm, p.unwrap_or(Personality::Neutral))
            }
        }
    }

    /// Validates every section and assembles the run.
    pub fn run_config(&self) -> Result<RunConfig> {
        let config = RunConfig {
            scenario: self.scenario.clone(),
            profile: self.profile()?,
            learner: self.learner.clone(),
            total_steps: self.run.total_steps,
            eval_period: self.run.eval_period,
            eval_episodes: self.run.eval_episodes,
            seed: self.run.seed,
            output_dir: self.run.output_dir.clone(),
            eval_threads: self.run.eval_threads,
        };
        config.validate()?;
        Ok(config)
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) | Error::InvalidInput(m) => m.clone(),
        other => other.to_string(),
    }
}
