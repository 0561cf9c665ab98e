//! Posterior belief over hypotheses and the confidence-based reward.
//!
//! Beliefs live in linear space and are renormalized after every update.
//! Log-ratio quantities clamp each probability into `[EPS, 1 - EPS]` so that
//! a belief collapsing onto one hypothesis still yields finite rewards.

use serde::{Deserialize, Serialize};

use crate::channel::{measurement_likelihood, ChannelParams, Observation};
use crate::error::{invalid, Error, Result};
use crate::hypothesis::{ActionSet, HypothesisIndex, PriorModel};

/// Clamp applied before any log or ratio of a belief entry.
pub const EPS: f64 = 1e-12;

const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    probs: Vec<f64>,
    step: usize,
}

impl Belief {
    /// Wraps an explicit probability vector at step 0.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || !probs.len().is_power_of_two() {
            return Err(invalid(
                "belief",
                format!("length {} is not a power of two", probs.len()),
            ));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(invalid("belief", "entries must be finite and nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(invalid("belief", format!("entries sum to {total}")));
        }
        Ok(Self { probs, step: 0 })
    }

    pub fn from_prior(prior: &PriorModel) -> Self {
        Self {
            probs: prior.probs().to_vec(),
            step: 0,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Number of processes this belief ranges over.
    pub fn n_processes(&self) -> usize {
        self.probs.len().trailing_zeros() as usize
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    /// Most probable hypothesis; ties go to the lowest index.
    pub fn argmax(&self) -> HypothesisIndex {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        HypothesisIndex(best as u32)
    }
}

/// Sensing cost per queried sensor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    lambda: f64,
}

impl RewardParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda.is_finite() && lambda >= 0.0 {
            Ok(Self { lambda })
        } else {
            Err(invalid("lambda", format!("{lambda} must be finite and >= 0")))
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

fn normalize(mut weights: Vec<f64>, step: usize) -> Result<Belief> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::NumericalFault(format!(
            "posterior mass {total} cannot be normalized at step {step}"
        )));
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(Belief { probs: weights, step })
}

/// One step of the Bayes filter: reweight by the likelihood of `obs` and renormalize.
pub fn update_posterior(prev: &Belief, obs: &Observation, ch: ChannelParams) -> Result<Belief> {
    let weights = prev
        .probs
        .iter()
        .enumerate()
        .map(|(i, &p)| p * measurement_likelihood(obs, HypothesisIndex(i as u32), ch))
        .collect();
    normalize(weights, prev.step + 1)
}

/// Posterior from the prior and a full observation history, accumulated in
/// log space. Independent of [`update_posterior`]'s recursion.
pub fn batch_posterior(prior: &PriorModel, history: &[Observation], ch: ChannelParams) -> Result<Belief> {
    let log_weights: Vec<f64> = prior
        .probs()
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let h = HypothesisIndex(i as u32);
            history
                .iter()
                .map(|obs| measurement_likelihood(obs, h, ch).ln())
                .fold(q.ln(), |acc, l| acc + l)
        })
        .collect();
    let peak = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return Err(Error::NumericalFault(
            "every hypothesis has zero posterior weight".into(),
        ));
    }
    let weights = log_weights.iter().map(|l| (l - peak).exp()).collect();
    normalize(weights, history.len())
}

#[inline]
fn log_odds(p: f64) -> f64 {
    let p = p.clamp(EPS, 1.0 - EPS);
    (p / (1.0 - p)).ln()
}

/// Bayesian log-likelihood ratio `ln(pi_i / (1 - pi_i))` of hypothesis `i`.
pub fn confidence(belief: &Belief, i: HypothesisIndex) -> f64 {
    log_odds(belief.probs[i.as_usize()])
}

/// Belief-weighted average of the per-hypothesis log-likelihood ratios.
pub fn avg_bllr(belief: &Belief) -> f64 {
    belief
        .probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * log_odds(p))
        .sum()
}

pub fn instantaneous_reward(prev: &Belief, next: &Belief, a: ActionSet, rp: RewardParams) -> f64 {
    avg_bllr(next) - avg_bllr(prev) - rp.lambda * a.len() as f64
}

/// Per-step mean of an episode's rewards.
pub fn average_reward(rewards: &[f64]) -> Result<f64> {
    if rewards.is_empty() {
        return Err(invalid("rewards", "an episode needs at least one reward"));
    }
    Ok(rewards.iter().sum::<f64>() / rewards.len() as f64)
}
