//! Acceptance checks for the simulator, printed one line per criterion.
//! Exits nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use acsense::harness::{
    action_stats, compute_metrics, evaluate_agent, evaluate_baseline, gradcheck_suite, train_run, RunConfig,
};
use acsense::{
    batch_posterior, build_prior, sample_hypothesis, sample_observation, update_posterior, ActionSet,
    BaselineKind, Belief, ChannelParams, EpisodeRecord, HypothesisIndex, Observation, StepRecord,
    Termination,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const THRESHOLDS: [f64; 3] = [0.9, 0.99, 0.999];
const MARGIN: f64 = 0.05;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit: Duration) -> String {
    format!("{:.2}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs())
}

fn belief_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(2..=4);
        let prior = build_prior(rng.gen_range(0.05..0.95), rng.gen_range(0.0..=1.0), n, (0, 1)).unwrap();
        let ch = ChannelParams::new(rng.gen_range(0.05..0.95)).unwrap();
        let truth = acsense::index_to_state(sample_hypothesis(&prior, &mut rng), n).unwrap();
        let k = rng.gen_range(0..=50);
        let mut belief = Belief::from_prior(&prior);
        let mut history = Vec::with_capacity(k);
        for _ in 0..k {
            let a = ActionSet::new(rng.gen_range(1..(1u32 << n)), n).unwrap();
            let obs = sample_observation(&truth, a, ch, &mut rng);
            belief = update_posterior(&belief, &obs, ch).unwrap();
            history.push(obs);
        }
        let oracle = batch_posterior(&prior, &history, ch).unwrap();
        for (r, b) in belief.probs().iter().zip(oracle.probs()) {
            worst = worst.max((r - b).abs());
        }
    }
    let elapsed = start.elapsed();
    let limit = Duration::from_secs(5);
    outcome(
        worst <= 1e-10 && elapsed < limit,
        format!(
            "max entrywise gap {worst:.2e} over 200 instances (tol 1e-10), {}",
            within(elapsed, limit)
        ),
    )
}

fn gradient_validity() -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig::default();
    let cases = gradcheck_suite(cfg.n_processes, &cfg.hidden_widths, cfg.input_map, 20, 1e-5, 7).unwrap();
    let failed = cases.iter().filter(|c| !c.report.passed()).count();
    let worst = cases.iter().map(|c| c.report.max_rel_error).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let limit = Duration::from_secs(5);
    outcome(
        failed == 0 && elapsed < limit,
        format!(
            "{} actor + critic nets, {failed} failed, max relative error {worst:.2e} (tol 1e-5), {}",
            cases.len(),
            within(elapsed, limit)
        ),
    )
}

fn stopping_calibration() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for pi_upper in [0.9, 0.99] {
        let cfg = RunConfig {
            pi_upper,
            eval_episodes: 10_000,
            seed: 3,
            ..RunConfig::default()
        };
        let m = compute_metrics(&evaluate_baseline(&cfg, BaselineKind::AllSensors).unwrap()).unwrap();
        let stopped = m.successes + m.fail_b_count;
        let accuracy = m.successes as f64 / stopped as f64;
        pass &= stopped > 0 && accuracy >= pi_upper - 0.02;
        parts.push(format!(
            "pi_upper {pi_upper}: accuracy {accuracy:.4} over {stopped} stopped"
        ));
    }
    let elapsed = start.elapsed();
    let limit = Duration::from_secs(60);
    pass &= elapsed < limit;
    outcome(pass, format!("{}, {}", parts.join("; "), within(elapsed, limit)))
}

/// Evaluation summary of one trained agent.
struct CellResult {
    lambda: f64,
    rho: f64,
    /// Mean stopping time and success ratio per entry of `THRESHOLDS`.
    stop: Vec<Option<f64>>,
    success: Vec<f64>,
    all_share: f64,
    single_share: f64,
}

fn train_cell(seed: u64, lambda: f64, rho: f64) -> CellResult {
    let base = RunConfig {
        lambda,
        rho,
        seed,
        ..RunConfig::default()
    };
    let agent = train_run(&base).unwrap().agent;
    let mut stop = Vec::new();
    let mut success = Vec::new();
    let mut shares = (0.0, 0.0);
    for pi_upper in THRESHOLDS {
        let cfg = RunConfig {
            pi_upper,
            ..base.clone()
        };
        let records = evaluate_agent(&cfg, &agent).unwrap();
        let m = compute_metrics(&records).unwrap();
        stop.push(m.mean_stopping_time);
        success.push(m.success_ratio);
        if pi_upper == base.pi_upper {
            let a = action_stats(&records, cfg.n_processes);
            shares = (a.fraction_all(), a.fraction_single());
        }
    }
    CellResult {
        lambda,
        rho,
        stop,
        success,
        all_share: shares.0,
        single_share: shares.1,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Trained agents for every (seed, lambda, rho) cell the trend checks use.
struct Trained {
    cells: Vec<(u64, CellResult)>,
}

impl Trained {
    fn run() -> Self {
        let grid: Vec<(u64, f64, f64)> = SEEDS
            .iter()
            .flat_map(|&s| {
                [0.0, 0.05, 0.1, 0.5]
                    .into_iter()
                    .flat_map(move |l| [0.0, 1.0].into_iter().map(move |r| (s, l, r)))
            })
            .collect();
        let cells = grid
            .par_iter()
            .map(|&(s, l, r)| (s, train_cell(s, l, r)))
            .collect();
        Self { cells }
    }

    fn median_of(&self, lambda: f64, rho: f64, f: impl Fn(&CellResult) -> Option<f64>) -> Option<f64> {
        let values: Option<Vec<f64>> = self
            .cells
            .iter()
            .filter(|(_, c)| c.lambda == lambda && c.rho == rho)
            .map(|(_, c)| f(c))
            .collect();
        values.map(median)
    }
}

fn lambda_extremes(t: &Trained) -> Outcome {
    let all = t.median_of(0.0, 0.0, |c| Some(c.all_share)).unwrap();
    let single = t.median_of(0.5, 0.0, |c| Some(c.single_share)).unwrap();
    outcome(
        all >= 0.9 && single >= 0.9,
        format!("median all-sensor share at lambda 0: {all:.3}; median single-sensor share at lambda 0.5: {single:.3} (need >= 0.9)"),
    )
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("none".into(), |x| format!("{x:.3}"))
}

fn trends(t: &Trained) -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();

    // (a) and (b) on every trained cell
    let mut ab_ok = true;
    for lambda in [0.0, 0.05, 0.1, 0.5] {
        for rho in [0.0, 1.0] {
            let stops: Vec<Option<f64>> = (0..THRESHOLDS.len())
                .map(|k| t.median_of(lambda, rho, |c| c.stop[k]))
                .collect();
            let succ: Vec<f64> = (0..THRESHOLDS.len())
                .map(|k| t.median_of(lambda, rho, |c| Some(c.success[k])).unwrap())
                .collect();
            let stop_ok = stops.iter().all(Option::is_some) && stops.windows(2).all(|w| w[0] <= w[1]);
            let succ_ok = succ.windows(2).all(|w| w[0] <= w[1]);
            if !(stop_ok && succ_ok) {
                ab_ok = false;
                notes.push(format!(
                    "(a/b) lambda {lambda} rho {rho}: stop {:?} success {succ:?}",
                    stops.iter().map(|s| fmt_opt(*s)).collect::<Vec<_>>()
                ));
            }
        }
    }
    pass &= ab_ok;
    notes.push(format!(
        "(a,b) {}",
        if ab_ok { "hold on 8 cells" } else { "violated" }
    ));

    // (c) correlation shortens stopping at pi_upper 0.99
    let k99 = THRESHOLDS.iter().position(|&p| p == 0.99).unwrap();
    for lambda in [0.05, 0.1] {
        let r0 = t.median_of(lambda, 0.0, |c| c.stop[k99]);
        let r1 = t.median_of(lambda, 1.0, |c| c.stop[k99]);
        let ok = matches!((r0, r1), (Some(a), Some(b)) if b <= (1.0 - MARGIN) * a);
        pass &= ok;
        notes.push(format!(
            "(c) lambda {lambda}: rho 1 {} vs rho 0 {}",
            fmt_opt(r1),
            fmt_opt(r0)
        ));
    }

    // (d) sensing cost lengthens stopping, at every threshold
    let mut d_ok = true;
    let mut d_gap = f64::INFINITY;
    for rho in [0.0, 1.0] {
        for k in 0..THRESHOLDS.len() {
            let cheap = t.median_of(0.0, rho, |c| c.stop[k]);
            let costly = t.median_of(0.5, rho, |c| c.stop[k]);
            match (cheap, costly) {
                (Some(a), Some(b)) => {
                    d_gap = d_gap.min(b / a - 1.0);
                    d_ok &= b >= (1.0 + MARGIN) * a;
                }
                _ => d_ok = false,
            }
        }
    }
    pass &= d_ok;
    notes.push(format!(
        "(d) lambda 0.5 over lambda 0 by at least {:.0}%",
        100.0 * d_gap
    ));
    outcome(pass, notes.join("; "))
}

fn run_train(bin: &str, dir: &Path) -> (Vec<u8>, Vec<u8>) {
    let out = dir.join("agent.json");
    let status = Command::new(bin)
        .args(["train", "--seed", "1", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    (
        std::fs::read(&out).unwrap(),
        std::fs::read(dir.join("agent.train.csv")).unwrap(),
    )
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_acsense");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_train(bin, a.path());
    let second = run_train(bin, b.path());
    let same_ckpt = first.0 == second.0;
    let same_log = first.1 == second.1;
    outcome(
        same_ckpt && same_log,
        format!(
            "checkpoint {} ({} bytes), training log {} ({} bytes)",
            if same_ckpt { "identical" } else { "differs" },
            first.0.len(),
            if same_log { "identical" } else { "differs" },
            first.1.len()
        ),
    )
}

fn random_record(rng: &mut ChaCha8Rng) -> EpisodeRecord {
    let truth = HypothesisIndex(rng.gen_range(0..8));
    let declared = if rng.gen_bool(0.75) {
        truth
    } else {
        HypothesisIndex(rng.gen_range(0..8))
    };
    let slots = rng.gen_range(0..60);
    let threshold = rng.gen_bool(0.85);
    let action = ActionSet::all(3);
    EpisodeRecord {
        true_hypothesis: truth,
        steps: (0..slots)
            .map(|_| StepRecord {
                action,
                observation: Observation::new(action, 0),
                reward: 0.0,
            })
            .collect(),
        beliefs: Vec::new(),
        stop_step: threshold.then_some(slots),
        declared,
        terminated_by: if threshold {
            Termination::Threshold
        } else {
            Termination::TMax
        },
    }
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut mismatches = 0;
    for _ in 0..100 {
        let records: Vec<EpisodeRecord> = (0..rng.gen_range(1..500))
            .map(|_| random_record(&mut rng))
            .collect();
        let mut success = 0usize;
        let mut stopped = 0usize;
        let mut stop_total = 0usize;
        for r in &records {
            if r.terminated_by == Termination::Threshold {
                stopped += 1;
                stop_total += r.stop_step.unwrap();
                if r.declared == r.true_hypothesis {
                    success += 1;
                }
            }
        }
        let ratio = success as f64 / records.len() as f64;
        let mean = (stopped > 0).then(|| stop_total as f64 / stopped as f64);
        let m = compute_metrics(&records).unwrap();
        let same = m.success_ratio == ratio
            && m.mean_stopping_time == mean
            && m.fail_a_count == records.len() - stopped
            && m.fail_b_count == stopped - success;
        if !same {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} mismatches over 100 randomized record sets"),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "belief oracle equivalence", belief_oracle()),
        (2, "gradient validity", gradient_validity()),
        (3, "stopping-rule calibration", stopping_calibration()),
    ];
    let start = Instant::now();
    let trained = Trained::run();
    let train_time = start.elapsed();
    results.push((4, "lambda extremes", lambda_extremes(&trained)));
    results.push((5, "trend reproduction", trends(&trained)));
    results.push((6, "determinism", determinism()));
    results.push((7, "metric definition oracle", metric_oracle()));

    for (id, name, o) in &results {
        println!(
            "criterion {id} {name}: {} | {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "trained {} agents for criteria 4-5 in {:.1}s",
        trained.cells.len(),
        train_time.as_secs_f64()
    );
    let failed = results.iter().filter(|(_, _, o)| !o.pass).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
