use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::agent::{Termination, TrainingLogEntry};
use crate::error::{Error, Result};
use crate::harness::sweep::SweepRow;

const SIGNIFICANT_DIGITS: usize = 6;

pub const SWEEP_HEADER: [&str; 17] = [
    "seed",
    "n",
    "p",
    "q",
    "rho",
    "lambda",
    "gamma",
    "actor_lr",
    "critic_lr",
    "pi_upper",
    "t_max",
    "train_episodes",
    "eval_episodes",
    "success_ratio",
    "mean_stopping_time",
    "fail_a_count",
    "fail_b_count",
];

pub const TRAINING_LOG_HEADER: [&str; 8] = [
    "episode",
    "true_hypothesis",
    "declared",
    "slots",
    "stop_step",
    "terminated_by",
    "total_reward",
    "sensors_used",
];

/// Shortest of fixed or scientific notation with six significant digits and
/// trailing zeros removed, like C's `%g`.
pub fn format_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent in scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= SIGNIFICANT_DIGITS as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn write_rows<W, I, R>(out: W, header: &[&str], rows: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| e.into_error())?.flush()
}

fn sweep_record(row: &SweepRow) -> Vec<String> {
    let (c, m) = (&row.config, &row.metrics);
    vec![
        c.seed.to_string(),
        c.n_processes.to_string(),
        format_g(c.p),
        format_g(c.q),
        format_g(c.rho),
        format_g(c.lambda),
        format_g(c.gamma),
        format_g(c.actor_lr),
        format_g(c.critic_lr),
        format_g(c.pi_upper),
        c.t_max_eval.to_string(),
        c.train_episodes.to_string(),
        m.episodes.to_string(),
        format_g(m.success_ratio),
        format_g(m.mean_stopping_time.unwrap_or(f64::NAN)),
        m.fail_a_count.to_string(),
        m.fail_b_count.to_string(),
    ]
}

fn log_record(e: &TrainingLogEntry) -> Vec<String> {
    vec![
        e.episode.to_string(),
        e.true_hypothesis.0.to_string(),
        e.declared.0.to_string(),
        e.slots.to_string(),
        e.stop_step.map(|k| k.to_string()).unwrap_or_default(),
        match e.terminated_by {
            Termination::Threshold => "threshold".to_string(),
            Termination::TMax => "t_max".to_string(),
        },
        format_g(e.total_reward),
        e.sensors_used.to_string(),
    ]
}

/// Writes the header and one line per row, in the order given.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> std::io::Result<()> {
    write_rows(out, &SWEEP_HEADER, rows.iter().map(sweep_record))
}

fn to_file(path: &Path, write: impl FnOnce(File) -> std::io::Result<()>) -> Result<()> {
    File::create(path).and_then(write).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn emit_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    to_file(path, |f| write_csv(rows, f))
}

pub fn emit_training_log(log: &[TrainingLogEntry], path: &Path) -> Result<()> {
    to_file(path, |f| {
        write_rows(f, &TRAINING_LOG_HEADER, log.iter().map(log_record))
    })
}
