use std::path::{Path, PathBuf};
use std::process::ExitCode;

use acsense::harness::{
    action_stats, compute_metrics, emit_csv, emit_training_log, evaluate_agent, evaluate_baseline, format_g,
    gradcheck_suite, load_checkpoint, load_config, save_checkpoint, sweep, train_run, write_csv, Grid,
    NetRole, RunConfig, SweepRow,
};
use acsense::{BaselineKind, EpisodeRecord};
use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "acsense",
    version,
    about = "Controlled-sensing anomaly detection with a learned sensor-selection policy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
struct Overrides {
    /// TOML file with RunConfig keys and an optional [grid] table.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Training episodes (train, sweep) or evaluation episodes (eval).
    #[arg(long, value_name = "N")]
    episodes: Option<usize>,
    #[arg(long = "pi-upper", value_name = "F")]
    pi_upper: Option<f64>,
    #[arg(long, value_name = "F")]
    lambda: Option<f64>,
    #[arg(long, value_name = "F")]
    rho: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BaselineArg {
    Random,
    All,
    Roundrobin,
}

impl From<BaselineArg> for BaselineKind {
    fn from(b: BaselineArg) -> Self {
        match b {
            BaselineArg::Random => BaselineKind::UniformRandom,
            BaselineArg::All => BaselineKind::AllSensors,
            BaselineArg::Roundrobin => BaselineKind::RoundRobinSingle,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write a checkpoint plus a per-episode training log.
    Train {
        #[command(flatten)]
        overrides: Overrides,
        /// Checkpoint path; the log goes next to it as `<stem>.train.csv`.
        #[arg(long, value_name = "PATH", default_value = "checkpoint.json")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint or a baseline policy and write one metrics row.
    Eval {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_name = "PATH", conflicts_with_all = ["baseline", "config"], required_unless_present = "baseline")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        baseline: Option<BaselineArg>,
        /// Metrics CSV path; stdout when omitted.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Train one agent per (lambda, rho) cell and evaluate each at every threshold.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_name = "PATH", default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Check backpropagation against finite differences on random networks.
    Gradcheck {
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        #[arg(long, value_name = "U64", default_value_t = 0)]
        seed: u64,
        /// Networks per role.
        #[arg(long, value_name = "N", default_value_t = 20)]
        nets: usize,
        #[arg(long, value_name = "F", default_value_t = 1e-5)]
        tolerance: f64,
    },
}

/// Failure classes with distinct exit codes.
enum Failure {
    /// Bad flags, config or ranges.
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<acsense::Error> for Failure {
    fn from(e: acsense::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

struct Resolved {
    run: RunConfig,
    grid: Option<Grid>,
}

/// Base config from the file (or defaults) with flag overrides applied.
/// `episodes_field` selects which counter `--episodes` sets.
fn resolve(
    o: &Overrides,
    base: Option<RunConfig>,
    episodes_field: fn(&mut RunConfig) -> &mut usize,
) -> Result<Resolved, Failure> {
    let (mut run, grid, mut has_seed) = match (&o.config, base) {
        (_, Some(run)) => (run, None, true),
        (Some(path), None) => {
            let file = load_config(path).map_err(usage)?;
            (file.run, file.grid, file.has_seed)
        }
        (None, None) => (RunConfig::default(), None, false),
    };
    if let Some(seed) = o.seed {
        run.seed = seed;
        has_seed = true;
    }
    if !has_seed {
        return Err(Failure::Usage(
            "a seed is required: pass --seed or set `seed` in the config".into(),
        ));
    }
    if let Some(n) = o.episodes {
        *episodes_field(&mut run) = n;
    }
    if let Some(v) = o.pi_upper {
        run.pi_upper = v;
    }
    if let Some(v) = o.lambda {
        run.lambda = v;
    }
    if let Some(v) = o.rho {
        run.rho = v;
    }
    run.validate().map_err(usage)?;
    Ok(Resolved { run, grid })
}

fn summarize(records: &[EpisodeRecord], cfg: &RunConfig) -> anyhow::Result<SweepRow> {
    let metrics = compute_metrics(records)?;
    let actions = action_stats(records, cfg.n_processes);
    eprintln!(
        "pi_upper={} success_ratio={} mean_stopping_time={} all_sensor_share={} single_sensor_share={}",
        format_g(cfg.pi_upper),
        format_g(metrics.success_ratio),
        format_g(metrics.mean_stopping_time.unwrap_or(f64::NAN)),
        format_g(actions.fraction_all()),
        format_g(actions.fraction_single()),
    );
    Ok(SweepRow {
        config: cfg.clone(),
        metrics,
    })
}

fn training_log_path(out: &Path) -> PathBuf {
    out.with_extension("train.csv")
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train { overrides, out } => {
            let cfg = resolve(&overrides, None, |c| &mut c.train_episodes)?.run;
            let outcome = train_run(&cfg).context("training failed")?;
            save_checkpoint(&outcome.agent, &cfg, &out)?;
            let log_path = training_log_path(&out);
            emit_training_log(&outcome.log, &log_path)?;
            eprintln!("wrote {} and {}", out.display(), log_path.display());
        }
        Command::Eval {
            overrides,
            checkpoint,
            baseline,
            out,
        } => {
            let (cfg, records) = match (checkpoint, baseline) {
                (Some(path), _) => {
                    let ckpt = load_checkpoint(&path).map_err(usage)?;
                    let cfg = resolve(&overrides, Some(ckpt.config.clone()), |c| &mut c.eval_episodes)?.run;
                    ckpt.check_dimensions(cfg.n_processes).map_err(usage)?;
                    let records = evaluate_agent(&cfg, &ckpt.agent())?;
                    (cfg, records)
                }
                (None, Some(kind)) => {
                    let mut cfg = resolve(&overrides, None, |c| &mut c.eval_episodes)?.run;
                    cfg.train_episodes = 0;
                    let records = evaluate_baseline(&cfg, kind.into())?;
                    (cfg, records)
                }
                (None, None) => return Err(Failure::Usage("eval needs --checkpoint or --baseline".into())),
            };
            let rows = [summarize(&records, &cfg)?];
            match out {
                Some(path) => emit_csv(&rows, &path)?,
                None => write_csv(&rows, std::io::stdout().lock()).context("writing to stdout")?,
            }
        }
        Command::Sweep { overrides, out } => {
            let resolved = resolve(&overrides, None, |c| &mut c.train_episodes)?;
            let mut grid = resolved.grid.unwrap_or_else(Grid::full);
            if let Some(v) = overrides.pi_upper {
                grid.pi_upper = vec![v];
            }
            if let Some(v) = overrides.lambda {
                grid.lambda = vec![v];
            }
            if let Some(v) = overrides.rho {
                grid.rho = vec![v];
            }
            let table = sweep(&resolved.run, &grid).map_err(usage)?;
            emit_csv(&table.rows, &out)?;
            eprintln!("wrote {} rows to {}", table.rows.len(), out.display());
            if !table.failures.is_empty() {
                let cells: Vec<String> = table
                    .failures
                    .iter()
                    .map(|f| format!("(lambda={}, rho={}): {}", f.lambda, f.rho, f.error))
                    .collect();
                return Err(Failure::Runtime(anyhow::anyhow!(
                    "{} cell(s) failed: {}",
                    cells.len(),
                    cells.join("; ")
                )));
            }
        }
        Command::Gradcheck {
            config,
            seed,
            nets,
            tolerance,
        } => {
            let cfg = match config {
                Some(path) => load_config(&path).map_err(usage)?.run,
                None => RunConfig::default(),
            };
            cfg.validate().map_err(usage)?;
            let cases = gradcheck_suite(
                cfg.n_processes,
                &cfg.hidden_widths,
                cfg.input_map,
                nets,
                tolerance,
                seed,
            )?;
            let mut failed = 0;
            for role in [NetRole::Actor, NetRole::Critic] {
                let mine: Vec<_> = cases.iter().filter(|c| c.role == role).collect();
                let passed = mine.iter().filter(|c| c.report.passed()).count();
                let worst = mine.iter().map(|c| c.report.max_rel_error).fold(0.0, f64::max);
                failed += mine.len() - passed;
                println!(
                    "{role:?}: {passed}/{} passed, max relative error {worst:.3e}",
                    mine.len()
                );
            }
            if failed > 0 {
                return Err(Failure::Runtime(anyhow::anyhow!(
                    "{failed} network(s) exceeded relative error {tolerance:e}"
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            // first paragraph of clap's message, folded onto one line
            let rendered = e.to_string();
            let first: Vec<&str> = rendered
                .lines()
                .take_while(|l| !l.trim().is_empty())
                .map(str::trim)
                .collect();
            eprintln!("{}", first.join(" "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
