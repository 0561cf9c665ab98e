use crate::agent::{
    baseline_policy, evaluate, train, ActorCritic, BaselineKind, EpisodeRecord, ExploreMode, TrainOutcome,
};
use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::hypothesis::hypothesis_count;

/// Trains a fresh agent on `cfg`.
pub fn train_run(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    train(
        &cfg.environment()?,
        &cfg.train_agent_config(),
        &cfg.hidden_widths,
        cfg.train_episodes,
        cfg.train_slots,
        cfg.train_stop_on_threshold,
        cfg.seed,
    )
}

/// Greedy rollouts of `agent` on `cfg.eval_episodes` fresh episodes at
/// `cfg.pi_upper`. Episode streams depend only on the seed and the episode
/// index, so different thresholds see the same hypotheses and noise.
pub fn evaluate_agent(cfg: &RunConfig, agent: &ActorCritic) -> Result<Vec<EpisodeRecord>> {
    cfg.validate_eval()?;
    let expected = hypothesis_count(cfg.n_processes);
    if agent.actor.input_dim() != expected {
        return Err(Error::DimensionMismatch {
            context: "agent input",
            expected,
            actual: agent.actor.input_dim(),
        });
    }
    let env = cfg.environment()?;
    evaluate(
        || agent.policy(ExploreMode::Argmax),
        &env,
        &cfg.eval_agent_config(),
        cfg.eval_episodes,
        cfg.seed,
    )
}

pub fn evaluate_baseline(cfg: &RunConfig, kind: BaselineKind) -> Result<Vec<EpisodeRecord>> {
    cfg.validate_eval()?;
    let env = cfg.environment()?;
    evaluate(
        || baseline_policy(kind, cfg.n_processes),
        &env,
        &cfg.eval_agent_config(),
        cfg.eval_episodes,
        cfg.seed,
    )
}
