use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, Environment, ExploreMode, InputMap};
use crate::belief::RewardParams;
use crate::channel::ChannelParams;
use crate::error::{invalid, Error, Result};
use crate::hypothesis::{build_prior, MAX_PROCESSES};
use crate::nn::OptimizerKind;

/// Every knob of one train-and-evaluate experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_processes: usize,
    /// Crossover probability of every sensor.
    pub p: f64,
    /// Probability that a process is normal.
    pub q: f64,
    pub rho: f64,
    /// Zero-based indices of the correlated pair.
    pub dependent_pair: [usize; 2],
    pub lambda: f64,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden_widths: Vec<usize>,
    /// Evaluation stopping threshold.
    pub pi_upper: f64,
    pub t_max_eval: usize,
    pub train_episodes: usize,
    pub train_slots: usize,
    /// Stopping threshold applied during training episodes.
    pub train_pi_upper: f64,
    /// When false, every training episode runs all `train_slots` slots.
    pub train_stop_on_threshold: bool,
    pub eval_episodes: usize,
    pub seed: u64,
    pub explore_mode: ExploreMode,
    pub input_map: InputMap,
    pub optimizer: OptimizerKind,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_processes: 3,
            p: 0.8,
            q: 0.8,
            rho: 0.0,
            dependent_pair: [0, 1],
            lambda: 0.0,
            gamma: 0.9,
            actor_lr: 0.0005,
            critic_lr: 0.005,
            hidden_widths: vec![32, 32],
            pi_upper: 0.99,
            t_max_eval: 300,
            train_episodes: 1500,
            train_slots: 100,
            train_pi_upper: 0.999,
            train_stop_on_threshold: true,
            eval_episodes: 10_000,
            seed: 0,
            explore_mode: ExploreMode::Sample,
            input_map: InputMap::Log,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.validate_eval()?;
        self.train_agent_config().validate()?;
        if self.hidden_widths.contains(&0) {
            return Err(invalid("hidden_widths", "layer widths must be positive"));
        }
        if self.train_episodes == 0 {
            return Err(invalid("train_episodes", "at least one episode is required"));
        }
        Ok(())
    }

    /// The subset of [`RunConfig::validate`] that evaluation depends on.
    pub fn validate_eval(&self) -> Result<()> {
        if !(2..=MAX_PROCESSES).contains(&self.n_processes) {
            return Err(invalid(
                "n_processes",
                format!("{} is not in [2, {MAX_PROCESSES}]", self.n_processes),
            ));
        }
        self.environment()?;
        self.eval_agent_config().validate()?;
        if self.eval_episodes == 0 {
            return Err(invalid("eval_episodes", "at least one episode is required"));
        }
        Ok(())
    }

    pub fn environment(&self) -> Result<Environment> {
        let [a, b] = self.dependent_pair;
        Ok(Environment {
            prior: build_prior(self.q, self.rho, self.n_processes, (a, b))?,
            channel: ChannelParams::new(self.p)?,
            reward: RewardParams::new(self.lambda)?,
        })
    }

    /// Settings for learning episodes.
    pub fn train_agent_config(&self) -> AgentConfig {
        AgentConfig {
            gamma: self.gamma,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            pi_upper: self.train_pi_upper,
            t_max: self.train_slots,
            explore_mode: self.explore_mode,
            input_map: self.input_map,
            optimizer: self.optimizer,
        }
    }

    /// Settings for evaluation rollouts: the evaluation threshold and horizon
    /// with greedy action selection.
    pub fn eval_agent_config(&self) -> AgentConfig {
        AgentConfig {
            pi_upper: self.pi_upper,
            t_max: self.t_max_eval,
            explore_mode: ExploreMode::Argmax,
            ..self.train_agent_config()
        }
    }
}

/// Values swept by [`crate::harness::sweep`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub pi_upper: Vec<f64>,
    pub lambda: Vec<f64>,
    pub rho: Vec<f64>,
}

impl Grid {
    /// Single-point grid at the base configuration's values.
    pub fn single(base: &RunConfig) -> Self {
        Self {
            pi_upper: vec![base.pi_upper],
            lambda: vec![base.lambda],
            rho: vec![base.rho],
        }
    }

    /// Thresholds 0.9 to 0.999, costs {0, 0.05, 0.1, 0.5}, correlations {0, 0.3, 1}.
    pub fn full() -> Self {
        Self {
            pi_upper: vec![0.9, 0.95, 0.99, 0.995, 0.999],
            lambda: vec![0.0, 0.05, 0.1, 0.5],
            rho: vec![0.0, 0.3, 1.0],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.pi_upper.is_empty() || self.lambda.is_empty() || self.rho.is_empty()
    }
}

/// Parsed config file: the run settings, an optional `[grid]` table and
/// whether the file fixed the seed itself.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigFile {
    pub run: RunConfig,
    pub grid: Option<Grid>,
    pub has_seed: bool,
}

impl ConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let config_err = |reason: String| Error::Config {
            path: path.to_path_buf(),
            reason,
        };
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| config_err(e.message().to_string()))?;
        let grid = table
            .remove("grid")
            .map(|g| g.try_into::<Grid>())
            .transpose()
            .map_err(|e| config_err(format!("[grid]: {}", e.message())))?;
        let has_seed = table.contains_key("seed");
        let run: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_err(e.message().to_string()))?;
        Ok(Self { run, grid, has_seed })
    }
}

pub fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ConfigFile::parse(&text, path)
}
