//! Versioned JSON checkpoints. Floats are written in shortest round-trip
//! form, so a loaded network reproduces the saved one bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::ActorCritic;
use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::hypothesis::{action_count, hypothesis_count};
use crate::nn::Mlp;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: RunConfig,
    pub actor: Mlp,
    pub critic: Mlp,
}

impl Checkpoint {
    pub fn new(agent: &ActorCritic, config: &RunConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config: config.clone(),
            actor: agent.actor.clone(),
            critic: agent.critic.clone(),
        }
    }

    /// Agent rebuilt from the stored networks, with fresh optimizer state.
    pub fn agent(&self) -> ActorCritic {
        ActorCritic::from_networks(
            self.actor.clone(),
            self.critic.clone(),
            &self.config.train_agent_config(),
        )
    }

    /// Checks that the networks fit an environment with `n` processes.
    pub fn check_dimensions(&self, n: usize) -> Result<()> {
        let inputs = hypothesis_count(n);
        for (context, expected, actual) in [
            ("checkpoint actor input", inputs, self.actor.input_dim()),
            ("checkpoint critic input", inputs, self.critic.input_dim()),
            (
                "checkpoint actor output",
                action_count(n),
                self.actor.output_dim(),
            ),
            ("checkpoint critic output", 1, self.critic.output_dim()),
        ] {
            if expected != actual {
                return Err(Error::DimensionMismatch {
                    context,
                    expected,
                    actual,
                });
            }
        }
        Ok(())
    }
}

pub fn save_checkpoint(agent: &ActorCritic, config: &RunConfig, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&Checkpoint::new(agent, config))
        .map_err(|e| Error::NumericalFault(format!("checkpoint serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads and validates a checkpoint. The stored networks must be well formed
/// and sized for the stored `n_processes`.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let corrupt = |reason: String| Error::CorruptCheckpoint {
        path: path.to_path_buf(),
        reason,
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| corrupt("missing format_version".into()))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(Error::VersionMismatch {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    let ckpt: Checkpoint = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
    ckpt.actor
        .validate()
        .map_err(|e| corrupt(format!("actor: {e}")))?;
    ckpt.critic
        .validate()
        .map_err(|e| corrupt(format!("critic: {e}")))?;
    ckpt.config
        .validate()
        .map_err(|e| corrupt(format!("config: {e}")))?;
    ckpt.check_dimensions(ckpt.config.n_processes)?;
    Ok(ckpt)
}
