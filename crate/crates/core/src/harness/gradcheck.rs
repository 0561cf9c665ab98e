use rand::Rng;
use serde::Serialize;

use crate::agent::InputMap;
use crate::belief::Belief;
use crate::error::{Error, Result};
use crate::hypothesis::{action_count, hypothesis_count};
use crate::nn::{gradient_check, layer_stack, Activation, GradCheckReport, GradCheckStatus, Mlp};
use crate::rng::{substream, Purpose};

/// Inputs tried per network before giving up on finding one away from every kink.
const MAX_INPUT_DRAWS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NetRole {
    Actor,
    Critic,
}

#[derive(Clone, Debug)]
pub struct GradCheckCase {
    pub role: NetRole,
    pub index: usize,
    pub report: GradCheckReport,
}

fn random_belief<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Result<Belief> {
    let raw: Vec<f64> = (0..len).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    Belief::new(raw.into_iter().map(|v| v / total).collect())
}

/// Gradient-checks `count` freshly initialized actors and as many critics
/// with the agent's architecture, each at a random belief. Inputs that put a
/// rectifier at its kink are redrawn.
pub fn gradcheck_suite(
    n: usize,
    hidden: &[usize],
    input_map: InputMap,
    count: usize,
    tolerance: f64,
    seed: u64,
) -> Result<Vec<GradCheckCase>> {
    let mut cases = Vec::with_capacity(2 * count);
    for (role, purpose, outputs, head) in [
        (
            NetRole::Actor,
            Purpose::ActorInit,
            action_count(n),
            Activation::Softmax,
        ),
        (NetRole::Critic, Purpose::CriticInit, 1, Activation::Identity),
    ] {
        let specs = layer_stack(hypothesis_count(n), hidden, outputs, head);
        for index in 0..count {
            let mut rng = substream(seed, purpose, index as u64 + 1);
            let net = Mlp::init(&specs, 0.01, &mut rng)?;
            let mut report = None;
            for _ in 0..MAX_INPUT_DRAWS {
                let x = input_map.features(&random_belief(hypothesis_count(n), &mut rng)?);
                let r = gradient_check(&net, &x, tolerance)?;
                if r.status != GradCheckStatus::Excluded {
                    report = Some(r);
                    break;
                }
            }
            let report = report.ok_or_else(|| {
                Error::NumericalFault(format!("no kink-free input found for {role:?} {index}"))
            })?;
            cases.push(GradCheckCase { role, index, report });
        }
    }
    Ok(cases)
}
