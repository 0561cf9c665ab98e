//! Anomaly detection under controlled sensing.
//!
//! `N` binary processes are each watched by a noisy sensor behind a binary
//! symmetric channel. At every slot an agent picks a nonempty subset of
//! sensors, folds the readings into a posterior over all `2^N` joint states,
//! and stops once the largest posterior entry passes a threshold. The sensor
//! selection policy is learned with a one-step actor-critic whose reward is
//! the gain in average Bayesian log-likelihood ratio minus a per-sensor cost.

pub mod agent;
pub mod belief;
pub mod channel;
pub mod error;
pub mod harness;
pub mod hypothesis;
pub mod nn;
pub mod rng;

pub use agent::{
    actor_update, baseline_policy, critic_update, evaluate, run_episode, run_policy_episode, select_action,
    td_error, train, ActorCritic, ActorPolicy, AgentConfig, Baseline, BaselineKind, Environment,
    EpisodeRecord, ExploreMode, InputMap, Policy, StepRecord, Termination, TrainOutcome, TrainingLogEntry,
};
pub use belief::{
    average_reward, avg_bllr, batch_posterior, confidence, instantaneous_reward, update_posterior, Belief,
    RewardParams,
};
pub use channel::{measurement_likelihood, sample_observation, ChannelParams, Observation};
pub use error::{Error, Result};
pub use harness::{
    compute_metrics, emit_csv, load_checkpoint, save_checkpoint, sweep, Checkpoint, Grid, RunConfig,
    RunMetrics,
};
pub use hypothesis::{
    build_prior, index_to_state, sample_hypothesis, state_to_index, ActionSet, HypothesisIndex, PriorModel,
    StateVector,
};
pub use nn::{
    gradient_check, Activation, GradCheckReport, GradCheckStatus, LayerSpec, Mlp, Optimizer, OptimizerKind,
};
