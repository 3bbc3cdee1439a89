use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constraint::{ConstraintDecl, SignalRegistry};
use crate::envs::{make_env, EnvOptions};
use crate::error::{Error, Result};
use crate::mdp::{Environment, ProblemSpec, RewardMode};
use crate::trainer::{Algo, TrainerConfig};

/// Environment variable that, when set, prefixes relative output directories.
pub const OUTPUT_ROOT_VAR: &str = "CAR_OUTPUT_ROOT";

/// One experiment as written in a TOML file.
///
/// ```toml
/// env = "pendulum"
/// algo = "qrsac-l"
/// reward_mode = "car"
/// seeds = [0, 1, 2]
/// output_dir = "runs/upright"
///
/// [[constraints]]
/// name = "upright"
/// kind = "episode-value"
/// epsilon = 0.01
/// value_fn = "abs-angle"
///
/// [trainer]
/// hidden_width = 64
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: String,
    pub algo: Algo,
    #[serde(default = "default_reward_mode")]
    pub reward_mode: RewardMode,
    #[serde(default)]
    pub constraints: Vec<ConstraintDecl>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub env_options: EnvOptions,
    #[serde(default)]
    pub trainer: TrainerConfig,
}

fn default_reward_mode() -> RewardMode {
    RewardMode::Car
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks everything that can be checked without training.
    pub fn validate(&self) -> Result<()> {
        self.trainer.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("`seeds` must not be empty".into()));
        }
        self.build_problem().map(|_| ())
    }

    /// Instantiates the environment and the problem it is trained on.
    pub fn build_problem(&self) -> Result<(Box<dyn Environment>, ProblemSpec)> {
        let env = make_env(&self.env, &self.env_options)?;
        let registry = SignalRegistry::builtin();
        let horizon = env.horizon();
        let constraints = self
            .constraints
            .iter()
            .map(|d| d.resolve(&registry, horizon))
            .collect::<Result<Vec<_>>>()?;
        let spec = ProblemSpec::new(
            horizon,
            self.trainer.gamma,
            self.reward_mode,
            constraints,
            env.observation_dim(),
            env.action_dim(),
        )?;
        Ok((env, spec))
    }

    /// Trainer settings for one seed.
    pub fn trainer_for_seed(&self, seed: u64) -> TrainerConfig {
        TrainerConfig {
            seed,
            ..self.trainer.clone()
        }
    }

    /// Hex SHA-256 of the canonical serialized form.
    pub fn content_hash(&self) -> Result<String> {
        let text = self.to_toml_string()?;
        Ok(hex_digest(text.as_bytes()))
    }

    /// `output_dir`, placed under the output-root variable when relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_VAR) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_toml_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
