//! Fixtures shared by the benchmarks.

use acsense::{
    build_prior, AgentConfig, ChannelParams, Environment, ExploreMode, InputMap, OptimizerKind, RewardParams,
};

/// Three processes, `p = q = 0.8`, independent prior, given sensing cost.
pub fn reference_environment(lambda: f64) -> Environment {
    Environment {
        prior: build_prior(0.8, 0.0, 3, (0, 1)).expect("valid prior"),
        channel: ChannelParams::new(0.8).expect("valid crossover"),
        reward: RewardParams::new(lambda).expect("valid cost"),
    }
}

pub fn reference_agent_config() -> AgentConfig {
    AgentConfig {
        gamma: 0.9,
        actor_lr: 0.0005,
        critic_lr: 0.005,
        pi_upper: 0.99,
        t_max: 300,
        explore_mode: ExploreMode::Sample,
        input_map: InputMap::Log,
        optimizer: OptimizerKind::Adam,
    }
}
