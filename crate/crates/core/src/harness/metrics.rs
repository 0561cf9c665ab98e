use serde::{Deserialize, Serialize};

use crate::agent::{EpisodeRecord, Termination};
use crate::error::{invalid, Result};
use crate::hypothesis::action_count;

/// Aggregate outcome of a batch of evaluation episodes.
///
/// An episode succeeds when it stops by threshold and declares the true
/// hypothesis. It fails with type (a) when the threshold is never reached
/// and type (b) when it stops by threshold on the wrong hypothesis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub episodes: usize,
    pub successes: usize,
    pub success_ratio: f64,
    /// Mean stop slot over every threshold-stopped episode, right or wrong.
    /// `None` if no episode reached the threshold.
    pub mean_stopping_time: Option<f64>,
    pub fail_a_count: usize,
    pub fail_b_count: usize,
}

pub fn compute_metrics(records: &[EpisodeRecord]) -> Result<RunMetrics> {
    if records.is_empty() {
        return Err(invalid("records", "cannot summarize zero episodes"));
    }
    let mut successes = 0;
    let mut fail_a_count = 0;
    let mut fail_b_count = 0;
    let mut stop_sum = 0usize;
    for r in records {
        match (r.terminated_by, r.stop_step) {
            (Termination::Threshold, Some(k)) => {
                stop_sum += k;
                if r.correct() {
                    successes += 1;
                } else {
                    fail_b_count += 1;
                }
            }
            _ => fail_a_count += 1,
        }
    }
    let stopped = successes + fail_b_count;
    Ok(RunMetrics {
        episodes: records.len(),
        successes,
        success_ratio: successes as f64 / records.len() as f64,
        mean_stopping_time: (stopped > 0).then(|| stop_sum as f64 / stopped as f64),
        fail_a_count,
        fail_b_count,
    })
}

/// How often each action was taken across a batch of episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionStats {
    /// Count per action, indexed by `mask - 1`.
    pub counts: Vec<usize>,
    pub total: usize,
}

impl ActionStats {
    pub fn fraction_all(&self) -> f64 {
        self.fraction(|mask| mask as usize == self.counts.len())
    }

    pub fn fraction_single(&self) -> f64 {
        self.fraction(|mask| mask.count_ones() == 1)
    }

    fn fraction(&self, keep: impl Fn(u32) -> bool) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let hits: usize = self
            .counts
            .iter()
            .enumerate()
            .filter(|(k, _)| keep(*k as u32 + 1))
            .map(|(_, c)| c)
            .sum();
        hits as f64 / self.total as f64
    }
}

pub fn action_stats(records: &[EpisodeRecord], n: usize) -> ActionStats {
    let mut counts = vec![0; action_count(n)];
    for step in records.iter().flat_map(|r| &r.steps) {
        counts[step.action.output_index()] += 1;
    }
    ActionStats {
        total: counts.iter().sum(),
        counts,
    }
}
