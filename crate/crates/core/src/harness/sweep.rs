use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::harness::config::{Grid, RunConfig};
use crate::harness::metrics::{compute_metrics, RunMetrics};
use crate::harness::run::{evaluate_agent, train_run};

/// One evaluation: the full configuration it ran under and its metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub config: RunConfig,
    pub metrics: RunMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub lambda: f64,
    pub rho: f64,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    /// Sorted by `(rho, lambda, pi_upper)`.
    pub rows: Vec<SweepRow>,
    pub failures: Vec<CellFailure>,
}

/// Trains one agent per `(lambda, rho)` cell and evaluates it at every
/// threshold in the grid. Cells run in parallel; a failing cell is recorded
/// and the rest of the sweep continues.
pub fn sweep(base: &RunConfig, grid: &Grid) -> Result<SweepTable> {
    if grid.is_empty() {
        return Err(invalid("grid", "every axis needs at least one value"));
    }
    let cells: Vec<(f64, f64)> = grid
        .rho
        .iter()
        .flat_map(|&rho| grid.lambda.iter().map(move |&lambda| (lambda, rho)))
        .collect();
    let outcomes: Vec<std::result::Result<Vec<SweepRow>, CellFailure>> = cells
        .par_iter()
        .map(|&(lambda, rho)| {
            run_cell(base, grid, lambda, rho).map_err(|e| CellFailure {
                lambda,
                rho,
                error: e.to_string(),
            })
        })
        .collect();

    let mut table = SweepTable::default();
    for outcome in outcomes {
        match outcome {
            Ok(rows) => table.rows.extend(rows),
            Err(failure) => table.failures.push(failure),
        }
    }
    table.rows.sort_by(|a, b| {
        let key = |r: &SweepRow| [r.config.rho, r.config.lambda, r.config.pi_upper];
        let (ka, kb) = (key(a), key(b));
        ka.iter()
            .zip(&kb)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(table)
}

fn run_cell(base: &RunConfig, grid: &Grid, lambda: f64, rho: f64) -> Result<Vec<SweepRow>> {
    let cell = RunConfig {
        lambda,
        rho,
        ..base.clone()
    };
    let trained = train_run(&cell)?;
    grid.pi_upper
        .iter()
        .map(|&pi_upper| {
            let config = RunConfig {
                pi_upper,
                ..cell.clone()
            };
            let metrics = compute_metrics(&evaluate_agent(&config, &trained.agent)?)?;
            Ok(SweepRow { config, metrics })
        })
        .collect()
}
