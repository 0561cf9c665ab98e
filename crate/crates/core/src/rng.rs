//! Seed derivation. Every random purpose gets its own ChaCha8 key derived from
//! the master seed, and every episode its own ChaCha stream under that key, so
//! changing how many episodes one phase runs never shifts another phase.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    ActorInit,
    CriticInit,
    TrainHypothesis,
    TrainChannel,
    TrainExplore,
    EvalHypothesis,
    EvalChannel,
    EvalExplore,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::ActorInit => 1,
            Purpose::CriticInit => 2,
            Purpose::TrainHypothesis => 3,
            Purpose::TrainChannel => 4,
            Purpose::TrainExplore => 5,
            Purpose::EvalHypothesis => 6,
            Purpose::EvalChannel => 7,
            Purpose::EvalExplore => 8,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for `purpose`, stream `index`, under master `seed`.
pub fn substream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ purpose.tag().wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// The three per-episode streams: hypothesis draw, channel noise, exploration.
#[derive(Clone, Debug)]
pub struct EpisodeRngs {
    pub hypothesis: ChaCha8Rng,
    pub channel: ChaCha8Rng,
    pub explore: ChaCha8Rng,
}

impl EpisodeRngs {
    pub fn new(seed: u64, phase: Phase, episode: u64) -> Self {
        let (h, c, e) = match phase {
            Phase::Train => (
                Purpose::TrainHypothesis,
                Purpose::TrainChannel,
                Purpose::TrainExplore,
            ),
            Phase::Eval => (
                Purpose::EvalHypothesis,
                Purpose::EvalChannel,
                Purpose::EvalExplore,
            ),
        };
        Self {
            hypothesis: substream(seed, h, episode),
            channel: substream(seed, c, episode),
            explore: substream(seed, e, episode),
        }
    }
}
