//! Binary symmetric sensing channel.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Result};
use crate::hypothesis::{ActionSet, HypothesisIndex, StateVector};

/// Crossover probability shared by every sensor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    p: f64,
}

impl ChannelParams {
    pub fn new(p: f64) -> Result<Self> {
        check_probability("p", p)?;
        Ok(Self { p })
    }

    pub fn crossover(&self) -> f64 {
        self.p
    }
}

/// Measurements returned by the sensors in `action`. Bit `j` of `values`
/// holds `y_j` for each queried sensor `j`; other bits are always zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    action: ActionSet,
    values: u32,
}

impl Observation {
    /// Builds an observation from explicit values. Bits outside the action are dropped.
    pub fn new(action: ActionSet, values: u32) -> Self {
        Self {
            action,
            values: values & action.mask(),
        }
    }

    pub fn action(&self) -> ActionSet {
        self.action
    }

    pub fn values(&self) -> u32 {
        self.values
    }

    /// Measurement from sensor `j`, or `None` if it was not queried.
    pub fn value(&self, j: usize) -> Option<u8> {
        self.action.contains(j).then_some(((self.values >> j) & 1) as u8)
    }
}

pub fn sample_observation<R: Rng + ?Sized>(
    s: &StateVector,
    a: ActionSet,
    ch: ChannelParams,
    rng: &mut R,
) -> Observation {
    let mut values = 0u32;
    for j in a.sensors() {
        let flipped = rng.gen::<f64>() < ch.p;
        let y = s.get(j) ^ u8::from(flipped);
        values |= u32::from(y) << j;
    }
    Observation::new(a, values)
}

/// `P(obs | H = i)`: each queried sensor contributes `1 - p` when its reading
/// agrees with the state hypothesis `i` assigns to it, `p` otherwise.
pub fn measurement_likelihood(obs: &Observation, i: HypothesisIndex, ch: ChannelParams) -> f64 {
    let mask = obs.action.mask();
    let mismatches = ((obs.values ^ i.0) & mask).count_ones() as i32;
    let matches = mask.count_ones() as i32 - mismatches;
    (1.0 - ch.p).powi(matches) * ch.p.powi(mismatches)
}
