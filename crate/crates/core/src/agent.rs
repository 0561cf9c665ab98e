//! Sensor-selection agents: the actor-critic learner, fixed baseline
//! policies, and the episode loop they share.
//!
//! An episode draws a true hypothesis from the prior, starts from the prior
//! belief and keeps sensing while `max_i pi_i <= pi_upper` and fewer than
//! `t_max` slots have elapsed. On exit the most probable hypothesis is
//! declared. Episodes that run out of slots are still declared but are
//! marked [`Termination::TMax`].

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{instantaneous_reward, update_posterior, Belief, RewardParams};
use crate::channel::{sample_observation, ChannelParams, Observation};
use crate::error::{invalid, Error, Result};
use crate::hypothesis::{
    action_count, hypothesis_count, index_to_state, sample_categorical, sample_hypothesis, ActionSet,
    HypothesisIndex, PriorModel,
};
use crate::nn::{layer_stack, Activation, Mlp, Optimizer, OptimizerKind};
use crate::rng::{substream, EpisodeRngs, Phase, Purpose};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExploreMode {
    /// Draw the action from the actor's categorical output.
    Sample,
    /// Take the most probable action.
    Argmax,
}

/// How a belief is presented to the networks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMap {
    /// The posterior vector itself.
    Raw,
    /// `ln(max(pi_i, 1e-6)) / 5 + 1`, which spreads out beliefs near the
    /// corners of the simplex where the policy has to tell them apart.
    #[default]
    Log,
}

const LOG_INPUT_FLOOR: f64 = 1e-6;
const LOG_INPUT_SCALE: f64 = 5.0;

impl InputMap {
    pub fn features(self, belief: &Belief) -> Vec<f64> {
        match self {
            Self::Raw => belief.probs().to_vec(),
            Self::Log => belief
                .probs()
                .iter()
                .map(|p| p.max(LOG_INPUT_FLOOR).ln() / LOG_INPUT_SCALE + 1.0)
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub pi_upper: f64,
    pub t_max: usize,
    pub explore_mode: ExploreMode,
    pub input_map: InputMap,
    pub optimizer: OptimizerKind,
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid("gamma", format!("{} is not in (0, 1)", self.gamma)));
        }
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(invalid(name, format!("{lr} must be positive")));
            }
        }
        if !(self.pi_upper > 0.5 && self.pi_upper <= 1.0) {
            return Err(invalid(
                "pi_upper",
                format!("{} is not in (0.5, 1]", self.pi_upper),
            ));
        }
        if self.t_max == 0 {
            return Err(invalid("t_max", "at least one slot is required"));
        }
        Ok(())
    }
}

/// The simulated world an agent interacts with.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    pub prior: PriorModel,
    pub channel: ChannelParams,
    pub reward: RewardParams,
}

impl Environment {
    pub fn n_processes(&self) -> usize {
        self.prior.n
    }
}

/// Maps a belief to a nonempty sensor set, possibly at random.
pub trait Policy {
    /// Called at the start of every episode.
    fn reset(&mut self) {}

    fn select(&mut self, belief: &Belief, rng: &mut dyn RngCore) -> Result<ActionSet>;
}

/// Picks an action from the actor's output at network input `x`.
pub fn select_action<R: Rng + ?Sized>(
    actor: &Mlp,
    x: &[f64],
    mode: ExploreMode,
    rng: &mut R,
) -> Result<ActionSet> {
    let n = x.len().trailing_zeros() as usize;
    if !x.len().is_power_of_two() || actor.output_dim() != action_count(n) {
        return Err(Error::DimensionMismatch {
            context: "actor output",
            expected: action_count(n),
            actual: actor.output_dim(),
        });
    }
    let probs = actor.forward(x)?;
    let k = match mode {
        ExploreMode::Argmax => argmax_lowest(&probs),
        ExploreMode::Sample => sample_categorical(&probs, rng),
    };
    Ok(ActionSet::from_output_index(k))
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    best
}

/// Policy backed by a frozen actor network.
#[derive(Clone, Copy, Debug)]
pub struct ActorPolicy<'a> {
    pub actor: &'a Mlp,
    pub input_map: InputMap,
    pub mode: ExploreMode,
}

impl Policy for ActorPolicy<'_> {
    fn select(&mut self, belief: &Belief, mut rng: &mut dyn RngCore) -> Result<ActionSet> {
        select_action(self.actor, &self.input_map.features(belief), self.mode, &mut rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    UniformRandom,
    AllSensors,
    RoundRobinSingle,
}

#[derive(Clone, Debug)]
pub struct Baseline {
    kind: BaselineKind,
    n: usize,
    next_sensor: usize,
}

pub fn baseline_policy(kind: BaselineKind, n: usize) -> Baseline {
    Baseline {
        kind,
        n,
        next_sensor: 0,
    }
}

impl Policy for Baseline {
    fn reset(&mut self) {
        self.next_sensor = 0;
    }

    fn select(&mut self, _belief: &Belief, rng: &mut dyn RngCore) -> Result<ActionSet> {
        Ok(match self.kind {
            BaselineKind::AllSensors => ActionSet::all(self.n),
            BaselineKind::UniformRandom => {
                ActionSet::from_output_index(rng.gen_range(0..action_count(self.n)))
            }
            BaselineKind::RoundRobinSingle => {
                let a = ActionSet::single(self.next_sensor);
                self.next_sensor = (self.next_sensor + 1) % self.n;
                a
            }
        })
    }
}

/// One-step TD error `r + gamma * v_next - v_prev`.
pub fn td_error(r: f64, v_prev: f64, v_next: f64, gamma: f64) -> f64 {
    r + gamma * v_next - v_prev
}

/// Semi-gradient step on `delta^2 / 2` with the bootstrapped target held
/// fixed: the critic moves along `delta * grad V(x_prev)`.
pub fn critic_update(critic: &mut Mlp, opt: &mut Optimizer, x_prev: &[f64], delta: f64) -> Result<()> {
    if !delta.is_finite() {
        return Err(Error::NumericalFault(format!("TD error {delta} is not finite")));
    }
    let trace = critic.trace(x_prev)?;
    let mut grads = critic.backward(&trace, &[1.0])?;
    grads.scale(delta);
    opt.step(critic, &grads, 1.0)
}

/// Policy-gradient ascent along `delta * grad log nu(action | x_prev)`.
pub fn actor_update(
    actor: &mut Mlp,
    opt: &mut Optimizer,
    x_prev: &[f64],
    action: ActionSet,
    delta: f64,
) -> Result<()> {
    if !delta.is_finite() {
        return Err(Error::NumericalFault(format!("TD error {delta} is not finite")));
    }
    let (_, mut grads) = actor.log_prob_gradient(x_prev, action.output_index())?;
    grads.scale(delta);
    opt.step(actor, &grads, 1.0)
}

/// Actor and critic networks for one environment size, together with the
/// input map they were trained on and their optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorCritic {
    pub actor: Mlp,
    pub critic: Mlp,
    pub input_map: InputMap,
    pub actor_opt: Optimizer,
    pub critic_opt: Optimizer,
}

impl ActorCritic {
    /// Fresh networks for `n` processes. Both read the `2^n` belief; the actor
    /// emits a softmax over the `2^n - 1` actions, the critic a scalar value.
    pub fn new(n: usize, hidden: &[usize], cfg: &AgentConfig, seed: u64) -> Result<Self> {
        let inputs = hypothesis_count(n);
        let actor = Mlp::init(
            &layer_stack(inputs, hidden, action_count(n), Activation::Softmax),
            cfg.actor_lr,
            &mut substream(seed, Purpose::ActorInit, 0),
        )?;
        let critic = Mlp::init(
            &layer_stack(inputs, hidden, 1, Activation::Identity),
            cfg.critic_lr,
            &mut substream(seed, Purpose::CriticInit, 0),
        )?;
        Ok(Self::from_networks(actor, critic, cfg))
    }

    /// Wraps existing networks, e.g. loaded from a checkpoint, with fresh optimizer state.
    pub fn from_networks(actor: Mlp, critic: Mlp, cfg: &AgentConfig) -> Self {
        Self {
            actor_opt: Optimizer::new(cfg.optimizer, &actor),
            critic_opt: Optimizer::new(cfg.optimizer, &critic),
            actor,
            critic,
            input_map: cfg.input_map,
        }
    }

    pub fn value(&self, belief: &Belief) -> Result<f64> {
        Ok(self.critic.forward(&self.input_map.features(belief))?[0])
    }

    pub fn policy(&self, mode: ExploreMode) -> ActorPolicy<'_> {
        ActorPolicy {
            actor: &self.actor,
            input_map: self.input_map,
            mode,
        }
    }

    /// Number of processes the networks were built for.
    pub fn n_processes(&self) -> usize {
        self.actor.input_dim().trailing_zeros() as usize
    }

    fn check_env(&self, env: &Environment) -> Result<()> {
        let expected = hypothesis_count(env.n_processes());
        for (context, actual) in [
            ("actor input", self.actor.input_dim()),
            ("critic input", self.critic.input_dim()),
        ] {
            if actual != expected {
                return Err(Error::DimensionMismatch {
                    context,
                    expected,
                    actual,
                });
            }
        }
        if self.actor.output_dim() != action_count(env.n_processes()) {
            return Err(Error::DimensionMismatch {
                context: "actor output",
                expected: action_count(env.n_processes()),
                actual: self.actor.output_dim(),
            });
        }
        if self.critic.output_dim() != 1 {
            return Err(Error::DimensionMismatch {
                context: "critic output",
                expected: 1,
                actual: self.critic.output_dim(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The largest posterior entry passed `pi_upper`.
    Threshold,
    /// The slot budget ran out first.
    TMax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub action: ActionSet,
    pub observation: Observation,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub true_hypothesis: HypothesisIndex,
    pub steps: Vec<StepRecord>,
    /// `pi(0), pi(1), ...`; empty unless beliefs were recorded.
    pub beliefs: Vec<Belief>,
    /// Slot at which the threshold was crossed.
    pub stop_step: Option<usize>,
    pub declared: HypothesisIndex,
    pub terminated_by: Termination,
}

impl EpisodeRecord {
    pub fn correct(&self) -> bool {
        self.declared == self.true_hypothesis
    }

    pub fn slots_used(&self) -> usize {
        self.steps.len()
    }

    pub fn sensors_used(&self) -> usize {
        self.steps.iter().map(|s| s.action.len()).sum()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Hooks driving [`episode_loop`].
trait Controller {
    fn choose(&mut self, belief: &Belief, rng: &mut dyn RngCore) -> Result<ActionSet>;

    /// Sees `(pi(k-1), pi(k), A_k, r(k))` after each slot.
    fn after_step(&mut self, _prev: &Belief, _next: &Belief, _action: ActionSet, _reward: f64) -> Result<()> {
        Ok(())
    }
}

struct Learner<'a> {
    agent: &'a mut ActorCritic,
    cfg: &'a AgentConfig,
    learn: bool,
}

impl Controller for Learner<'_> {
    fn choose(&mut self, belief: &Belief, mut rng: &mut dyn RngCore) -> Result<ActionSet> {
        let x = self.agent.input_map.features(belief);
        select_action(&self.agent.actor, &x, self.cfg.explore_mode, &mut rng)
    }

    fn after_step(&mut self, prev: &Belief, next: &Belief, action: ActionSet, reward: f64) -> Result<()> {
        if !self.learn {
            return Ok(());
        }
        let agent = &mut *self.agent;
        let delta = td_error(reward, agent.value(prev)?, agent.value(next)?, self.cfg.gamma);
        let x_prev = agent.input_map.features(prev);
        critic_update(&mut agent.critic, &mut agent.critic_opt, &x_prev, delta)?;
        actor_update(&mut agent.actor, &mut agent.actor_opt, &x_prev, action, delta)
    }
}

struct Fixed<'a, P: ?Sized>(&'a mut P);

impl<P: Policy + ?Sized> Controller for Fixed<'_, P> {
    fn choose(&mut self, belief: &Belief, rng: &mut dyn RngCore) -> Result<ActionSet> {
        self.0.select(belief, rng)
    }
}

fn episode_loop<C: Controller>(
    env: &Environment,
    pi_upper: f64,
    t_max: usize,
    rngs: &mut EpisodeRngs,
    record_beliefs: bool,
    controller: &mut C,
) -> Result<EpisodeRecord> {
    let n = env.n_processes();
    let true_hypothesis = sample_hypothesis(&env.prior, &mut rngs.hypothesis);
    let truth = index_to_state(true_hypothesis, n)?;
    let mut belief = Belief::from_prior(&env.prior);
    let mut steps = Vec::new();
    let mut beliefs = Vec::new();
    if record_beliefs {
        beliefs.push(belief.clone());
    }

    while belief.max_prob() <= pi_upper && steps.len() < t_max {
        let action = controller.choose(&belief, &mut rngs.explore)?;
        if action.mask() >> n != 0 {
            return Err(invalid(
                "action",
                format!("mask {:#b} exceeds N = {n}", action.mask()),
            ));
        }
        let observation = sample_observation(&truth, action, env.channel, &mut rngs.channel);
        let next = update_posterior(&belief, &observation, env.channel)?;
        let reward = instantaneous_reward(&belief, &next, action, env.reward);
        controller.after_step(&belief, &next, action, reward)?;
        steps.push(StepRecord {
            action,
            observation,
            reward,
        });
        if record_beliefs {
            beliefs.push(next.clone());
        }
        belief = next;
    }

    let terminated_by = if belief.max_prob() > pi_upper {
        Termination::Threshold
    } else {
        Termination::TMax
    };
    Ok(EpisodeRecord {
        true_hypothesis,
        stop_step: (terminated_by == Termination::Threshold).then_some(steps.len()),
        declared: belief.argmax(),
        terminated_by,
        steps,
        beliefs,
    })
}

/// Runs one episode of the actor-critic agent. With `learn` set, every slot
/// updates the critic and then the actor, both from the TD error computed
/// with the critic as it was before the slot.
pub fn run_episode(
    agent: &mut ActorCritic,
    env: &Environment,
    cfg: &AgentConfig,
    learn: bool,
    rngs: &mut EpisodeRngs,
    record_beliefs: bool,
) -> Result<EpisodeRecord> {
    agent.check_env(env)?;
    let mut learner = Learner { agent, cfg, learn };
    episode_loop(env, cfg.pi_upper, cfg.t_max, rngs, record_beliefs, &mut learner)
}

/// Runs one episode of an arbitrary fixed policy.
pub fn run_policy_episode<P: Policy + ?Sized>(
    policy: &mut P,
    env: &Environment,
    cfg: &AgentConfig,
    rngs: &mut EpisodeRngs,
    record_beliefs: bool,
) -> Result<EpisodeRecord> {
    policy.reset();
    episode_loop(
        env,
        cfg.pi_upper,
        cfg.t_max,
        rngs,
        record_beliefs,
        &mut Fixed(policy),
    )
}

/// Evaluates a frozen policy on `episodes` fresh episodes in parallel.
/// Episode `e` always uses the same random streams, whatever the threshold.
pub fn evaluate<P, F>(
    make_policy: F,
    env: &Environment,
    cfg: &AgentConfig,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeRecord>>
where
    P: Policy,
    F: Fn() -> P + Sync,
{
    (0..episodes)
        .into_par_iter()
        .map(|e| {
            let mut rngs = EpisodeRngs::new(seed, Phase::Eval, e as u64);
            run_policy_episode(&mut make_policy(), env, cfg, &mut rngs, false)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingLogEntry {
    pub episode: usize,
    pub true_hypothesis: HypothesisIndex,
    pub declared: HypothesisIndex,
    pub slots: usize,
    pub stop_step: Option<usize>,
    pub terminated_by: Termination,
    pub total_reward: f64,
    pub sensors_used: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub agent: ActorCritic,
    pub log: Vec<TrainingLogEntry>,
}

/// Runs `e_max` learning episodes of at most `slots_per_episode` slots each.
/// `cfg.t_max` is ignored in favour of `slots_per_episode`; when
/// `stop_on_threshold` is false every episode runs the full horizon.
pub fn train(
    env: &Environment,
    cfg: &AgentConfig,
    hidden: &[usize],
    e_max: usize,
    slots_per_episode: usize,
    stop_on_threshold: bool,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut agent = ActorCritic::new(env.n_processes(), hidden, cfg, seed)?;
    let train_cfg = AgentConfig {
        t_max: slots_per_episode,
        pi_upper: if stop_on_threshold {
            cfg.pi_upper
        } else {
            f64::INFINITY
        },
        ..*cfg
    };
    let mut log = Vec::with_capacity(e_max);
    for episode in 0..e_max {
        let mut rngs = EpisodeRngs::new(seed, Phase::Train, episode as u64);
        let record = run_episode(&mut agent, env, &train_cfg, true, &mut rngs, false).map_err(|e| {
            Error::Divergence {
                episode,
                reason: e.to_string(),
            }
        })?;
        log.push(TrainingLogEntry {
            episode,
            true_hypothesis: record.true_hypothesis,
            declared: record.declared,
            slots: record.slots_used(),
            stop_step: record.stop_step,
            terminated_by: record.terminated_by,
            total_reward: record.total_reward(),
            sensors_used: record.sensors_used(),
        });
    }
    Ok(TrainOutcome { agent, log })
}
