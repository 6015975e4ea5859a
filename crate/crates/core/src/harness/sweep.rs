//! Grid sweeps with per-cell aggregation over seeds.

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, ProblemConfig, SweepGrid};
use super::run::{run_experiment, RunSummary};
use crate::error::{Error, Result};
use crate::optim::MaskMode;
use crate::problems::{Arrangement, Tail};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub cell: usize,
    pub learning_rate: f64,
    pub survival_p: f64,
    pub temperature: f64,
    pub mode: MaskMode,
    pub tail: Option<Tail>,
    pub arrangement: Option<Arrangement>,
    pub dense_moments: bool,
    pub seeds: usize,
    /// Mean over seeds of the final loss, `+∞` when any seed diverged.
    pub mean_final_loss: Option<f64>,
    pub std_final_loss: Option<f64>,
    pub mean_best_loss: Option<f64>,
    pub diverged_runs: usize,
    /// `ok` or `error`.
    pub status: String,
    pub message: String,
    pub runs: Vec<RunSummary>,
}

impl SweepRow {
    fn describe(cell: usize, cfg: &ExperimentConfig) -> Self {
        let (tail, arrangement) = match &cfg.problem {
            ProblemConfig::Quadratic(q) => (None, Some(q.arrangement)),
            ProblemConfig::Icl(c) => (Some(c.tail), None),
        };
        Self {
            cell,
            learning_rate: cfg.optimizer.learning_rate,
            survival_p: cfg.wrapper.survival_p,
            temperature: cfg.wrapper.temperature,
            mode: cfg.wrapper.mode,
            tail,
            arrangement,
            dense_moments: cfg.wrapper.dense_moments,
            seeds: cfg.seeds.len(),
            mean_final_loss: None,
            std_final_loss: None,
            mean_best_loss: None,
            diverged_runs: 0,
            status: "ok".into(),
            message: String::new(),
            runs: Vec::new(),
        }
    }

    /// Lower is better; failed cells rank last.
    pub fn score(&self) -> f64 {
        self.mean_final_loss.unwrap_or(f64::INFINITY)
    }

    pub fn is_stable(&self) -> bool {
        self.status == "ok" && self.diverged_runs == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Row with the lowest mean final loss among those accepted by `filter`.
    pub fn best<F: Fn(&SweepRow) -> bool>(&self, filter: F) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| filter(r))
            .min_by(|a, b| a.score().total_cmp(&b.score()))
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 || !mean.is_finite() {
        return (mean, if values.len() < 2 { 0.0 } else { f64::NAN });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregate already computed runs of one cell.
pub fn aggregate(cell: usize, cfg: &ExperimentConfig, runs: Result<Vec<RunSummary>>) -> SweepRow {
    let mut row = SweepRow::describe(cell, cfg);
    match runs {
        Ok(runs) => {
            let finals: Vec<f64> = runs.iter().map(RunSummary::ranked_loss).collect();
            let bests: Vec<f64> = runs.iter().map(|r| r.best_loss).collect();
            let (m, s) = mean_std(&finals);
            row.mean_final_loss = Some(m);
            row.std_final_loss = Some(s);
            row.mean_best_loss = Some(mean_std(&bests).0);
            row.diverged_runs = runs.iter().filter(|r| r.diverged).count();
            row.runs = runs;
        }
        Err(e) => {
            row.status = "error".into();
            row.message = e.to_string();
        }
    }
    row
}

/// Run every cell of `grid` over its seeds. Cells and seeds run in parallel;
/// results do not depend on scheduling. A failing cell is reported in its
/// row and does not stop the sweep.
pub fn sweep(template: &ExperimentConfig, grid: &SweepGrid) -> Result<SweepTable> {
    let cells = grid.expand(template)?;
    if cells.is_empty() {
        return Err(Error::config("sweep grid is empty"));
    }
    let jobs: Vec<(usize, u64)> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results: Vec<Result<RunSummary>> = jobs
        .par_iter()
        .map(|&(i, seed)| run_experiment(&cells[i], seed).map(|o| o.summary))
        .collect();
    let mut per_cell: Vec<Result<Vec<RunSummary>>> = cells.iter().map(|_| Ok(Vec::new())).collect();
    for ((i, _), res) in jobs.iter().zip(results) {
        match (&mut per_cell[*i], res) {
            (Ok(v), Ok(s)) => v.push(s),
            (slot @ Ok(_), Err(e)) => *slot = Err(e),
            (Err(_), _) => {}
        }
    }
    Ok(SweepTable {
        rows: cells
            .iter()
            .zip(per_cell)
            .enumerate()
            .map(|(i, (c, r))| aggregate(i, c, r))
            .collect(),
    })
}
