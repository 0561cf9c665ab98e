//! Process states, hypothesis and action encodings, and the correlated prior.
//!
//! Both hypotheses and actions are bitmasks over process indices: process
//! `j` (0-based) is bit `j`, so the first process is the least-significant
//! bit. Hypothesis `i` therefore assigns state `(i >> j) & 1` to process `j`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, invalid, Error, Result};

/// Largest supported number of processes. Beliefs have `2^N` entries and the
/// actor has `2^N - 1` outputs, so this is far beyond anything trainable.
pub const MAX_PROCESSES: usize = 16;

pub(crate) fn check_process_count(n: usize) -> Result<()> {
    if (1..=MAX_PROCESSES).contains(&n) {
        Ok(())
    } else {
        Err(invalid(
            "n_processes",
            format!("{n} is not in [1, {MAX_PROCESSES}]"),
        ))
    }
}

/// Binary state of every process: 0 = normal, 1 = anomalous.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StateVector(Vec<u8>);

impl StateVector {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        check_process_count(bits.len())?;
        if let Some(bad) = bits.iter().find(|&&b| b > 1) {
            return Err(invalid("state", format!("entry {bad} is not binary")));
        }
        Ok(Self(bits))
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// State of process `j` (0-based).
    pub fn get(&self, j: usize) -> u8 {
        self.0[j]
    }
}

/// Index of one joint hypothesis in `[0, 2^N)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HypothesisIndex(pub u32);

impl HypothesisIndex {
    /// State (0 or 1) this hypothesis assigns to process `j`.
    #[inline]
    pub fn bit(self, j: usize) -> u8 {
        ((self.0 >> j) & 1) as u8
    }

    #[inline]
    pub fn as_usize(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for HypothesisIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A nonempty subset of sensors, encoded as a bitmask over process indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct ActionSet(u32);

impl ActionSet {
    /// Builds an action for `n` processes. Rejects the empty set and bits beyond `n`.
    pub fn new(mask: u32, n: usize) -> Result<Self> {
        check_process_count(n)?;
        if mask == 0 {
            return Err(invalid("action", "the empty sensor set is not an action"));
        }
        if mask >> n != 0 {
            return Err(invalid(
                "action",
                format!("mask {mask:#b} references sensors beyond N = {n}"),
            ));
        }
        Ok(Self(mask))
    }

    /// The action querying every one of `n` sensors.
    pub fn all(n: usize) -> Self {
        Self((1u32 << n) - 1)
    }

    /// The action querying only sensor `j`.
    pub fn single(j: usize) -> Self {
        Self(1u32 << j)
    }

    /// Action number `k` in `[0, 2^N - 1)` as laid out on the actor's output layer.
    #[inline]
    pub fn from_output_index(k: usize) -> Self {
        Self(k as u32 + 1)
    }

    #[inline]
    pub fn output_index(self) -> usize {
        self.0 as usize - 1
    }

    #[inline]
    pub fn mask(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        false
    }

    #[inline]
    pub fn contains(self, j: usize) -> bool {
        (self.0 >> j) & 1 == 1
    }

    /// Queried sensor indices in increasing order.
    pub fn sensors(self) -> impl Iterator<Item = usize> {
        let mask = self.0;
        (0..32).filter(move |j| (mask >> j) & 1 == 1)
    }
}

impl TryFrom<u32> for ActionSet {
    type Error = Error;

    fn try_from(mask: u32) -> Result<Self> {
        if mask == 0 {
            Err(invalid("action", "the empty sensor set is not an action"))
        } else {
            Ok(Self(mask))
        }
    }
}

impl From<ActionSet> for u32 {
    fn from(a: ActionSet) -> u32 {
        a.0
    }
}

/// Number of actions available with `n` sensors.
pub fn action_count(n: usize) -> usize {
    (1usize << n) - 1
}

/// Number of joint hypotheses with `n` processes.
pub fn hypothesis_count(n: usize) -> usize {
    1usize << n
}

pub fn state_to_index(s: &StateVector) -> HypothesisIndex {
    let index = s
        .bits()
        .iter()
        .enumerate()
        .fold(0u32, |acc, (j, &b)| acc | (u32::from(b) << j));
    HypothesisIndex(index)
}

pub fn index_to_state(i: HypothesisIndex, n: usize) -> Result<StateVector> {
    check_process_count(n)?;
    if i.as_usize() >= hypothesis_count(n) {
        return Err(invalid(
            "hypothesis",
            format!("index {i} is out of range for N = {n}"),
        ));
    }
    Ok(StateVector((0..n).map(|j| i.bit(j)).collect()))
}

/// Prior over hypotheses: one correlated pair of processes, the rest
/// independent, every process normal with marginal probability `q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorModel {
    pub q: f64,
    pub rho: f64,
    pub n: usize,
    pub dependent_pair: (usize, usize),
    probs: Vec<f64>,
}

impl PriorModel {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, i: HypothesisIndex) -> f64 {
        self.probs[i.as_usize()]
    }
}

/// Joint pmf of the dependent pair, indexed by `a + 2 b` for states `(a, b)`.
fn pair_pmf(q: f64, rho: f64) -> [f64; 4] {
    let shared = q * (1.0 - q);
    let same_normal = q * q + rho * shared;
    let differ = shared * (1.0 - rho);
    let same_anomalous = (1.0 - q) * (1.0 - q) + rho * shared;
    [same_normal, differ, differ, same_anomalous]
}

pub fn build_prior(q: f64, rho: f64, n: usize, dependent_pair: (usize, usize)) -> Result<PriorModel> {
    check_probability("q", q)?;
    check_probability("rho", rho)?;
    check_process_count(n)?;
    if n < 2 {
        return Err(invalid("n_processes", "a dependent pair needs N >= 2"));
    }
    let (a, b) = dependent_pair;
    if a == b || a >= n || b >= n {
        return Err(invalid(
            "dependent_pair",
            format!("({a}, {b}) must be two distinct indices below N = {n}"),
        ));
    }

    let pair = pair_pmf(q, rho);
    let probs = (0..hypothesis_count(n) as u32)
        .map(|i| {
            let h = HypothesisIndex(i);
            let mut p = pair[usize::from(h.bit(a)) + 2 * usize::from(h.bit(b))];
            for j in (0..n).filter(|&j| j != a && j != b) {
                p *= if h.bit(j) == 0 { q } else { 1.0 - q };
            }
            p
        })
        .collect();

    Ok(PriorModel {
        q,
        rho,
        n,
        dependent_pair,
        probs,
    })
}

/// Draws an index from a probability vector by inverting its CDF.
/// Zero-probability entries are never returned.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        cumulative += p;
        last_positive = k;
        if u < cumulative {
            return k;
        }
    }
    last_positive
}

pub fn sample_hypothesis<R: Rng + ?Sized>(prior: &PriorModel, rng: &mut R) -> HypothesisIndex {
    HypothesisIndex(sample_categorical(&prior.probs, rng) as u32)
}
