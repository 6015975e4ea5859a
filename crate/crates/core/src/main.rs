//! Command-line front end: single runs, sweeps, the verification suite and
//! one-off diagnostics.
//!
//! Exit codes: 0 on success (a diverged run is a result, not a failure),
//! 1 when `verify` finds a failing property or a run hits a runtime error,
//! 2 for usage errors, unreadable files and invalid configs.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use magma::diagnostics::{expected_masked_loss_quadratic, robust_condition_number, transformer_hessian};
use magma::harness::{
    run_experiment, streams, sweep, verify, write_sweep_csv, write_trace_csv, ExperimentConfig,
    Problem, SweepGrid, OUT_DIR_ENV,
};
use magma::numeric::{BlockVector, RngStream};
use magma::optim::MaskMode;
use magma::problems::Objective;
use magma::Error;

const DEFAULT_OUT_DIR: &str = "out";

#[derive(Parser)]
#[command(name = "magma", version, about = "Masked adaptive optimizer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seed of an experiment and write its trace and summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the first seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run every cell of a grid over the config's seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run the property suite and print a JSON report.
    Verify {
        /// Smaller sample sizes, for smoke testing.
        #[arg(long)]
        quick: bool,
    },
    /// One-off diagnostics on a configured problem.
    Diag {
        #[command(subcommand)]
        which: Diag,
    },
}

#[derive(Args)]
struct OutDir {
    /// Output directory; falls back to $MAGMA_OUT_DIR, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutDir {
    fn resolve(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

#[derive(Args)]
struct DiagArgs {
    #[arg(long)]
    config: PathBuf,
    /// Seed of the initial point; defaults to the first seed of the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Diag {
    /// Robust condition number λ_max/median of the Hessian at the initial point.
    Condnum(DiagArgs),
    /// Expected masked loss against the curvature regularizer at the initial
    /// point (quadratics).
    Prop1(DiagArgs),
    /// Descent audit along a full SGD run (quadratics).
    Descent(DiagArgs),
}

/// Error plus the exit code it maps to.
struct Failure(u8, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Io { .. } | Error::Json { .. } => 2,
            _ => 1,
        };
        Failure(code, e.to_string())
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure(2, format!("cannot create {}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure(1, e.to_string()))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| Failure(1, format!("cannot write {}: {e}", path.display())))
}

/// A closed stdout (e.g. piped into `head`) is not an error.
fn print_json(value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure(1, e.to_string()))?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure(1, e.to_string())),
        _ => Ok(()),
    }
}

fn seed_of(cfg: &ExperimentConfig, seed: Option<u64>) -> u64 {
    seed.unwrap_or(cfg.seeds[0])
}

fn cmd_run(config: &Path, seed: Option<u64>, out: &OutDir) -> Result<u8, Failure> {
    let cfg = ExperimentConfig::load(config)?;
    let seed = seed_of(&cfg, seed);
    let dir = out.resolve();
    create_dir(&dir)?;
    let output = run_experiment(&cfg, seed)?;
    let trace_path = dir.join(format!("trace_seed{seed}.csv"));
    write_trace_csv(&output.trace, &trace_path)?;
    write_json(&dir.join(format!("summary_seed{seed}.json")), &output.summary)?;
    print_json(&output.summary)?;
    Ok(0)
}

fn cmd_sweep(config: &Path, grid: &Path, out: &OutDir) -> Result<u8, Failure> {
    let cfg = ExperimentConfig::load(config)?;
    let grid = SweepGrid::load(grid)?;
    let dir = out.resolve();
    create_dir(&dir)?;
    let table = sweep(&cfg, &grid)?;
    write_sweep_csv(&table, dir.join("sweep.csv"))?;
    write_json(&dir.join("sweep.json"), &table)?;
    let errors = table.rows.iter().filter(|r| r.status != "ok").count();
    print_json(&json!({
        "cells": table.rows.len(),
        "error_cells": errors,
        "table": dir.join("sweep.csv"),
    }))?;
    Ok(0)
}

fn cmd_verify(quick: bool) -> Result<u8, Failure> {
    let report = verify(quick);
    print_json(&report)?;
    Ok(if report.all_pass() { 0 } else { 1 })
}

fn initial_point(cfg: &ExperimentConfig, seed: u64) -> Result<(Problem, BlockVector), Failure> {
    let problem = Problem::build(&cfg.problem, seed)?;
    let theta = problem.init_params(&mut RngStream::new(seed, streams::INIT))?;
    Ok((problem, theta))
}

fn cmd_diag(which: &Diag) -> Result<u8, Failure> {
    let (Diag::Condnum(args) | Diag::Prop1(args) | Diag::Descent(args)) = which;
    let cfg = ExperimentConfig::load(&args.config)?;
    let seed = seed_of(&cfg, args.seed);
    match which {
        Diag::Condnum(_) => {
            let (problem, theta) = initial_point(&cfg, seed)?;
            let cond = match &problem {
                Problem::Quadratic(q) => robust_condition_number(q.hessian())?,
                Problem::Icl(p) => {
                    let batch = problem
                        .hessian_batch(cfg.diagnostics.hessian_batch)
                        .expect("icl problems have a hessian batch");
                    robust_condition_number(&transformer_hessian(p.model(), &theta, &batch)?)?
                }
            };
            print_json(&json!({
                "seed": seed,
                "loss": problem.loss(&theta)?,
                "condition_number": cond,
            }))?;
        }
        Diag::Prop1(_) => {
            let (problem, theta) = initial_point(&cfg, seed)?;
            let Problem::Quadratic(q) = &problem else {
                return Err(Failure(2, "diag prop1 needs a quadratic problem".into()));
            };
            let mut delta = q.grad_at(&theta)?;
            delta.scale(cfg.optimizer.learning_rate);
            let p = match cfg.wrapper.mode {
                MaskMode::Skip | MaskMode::Magma if cfg.wrapper.survival_p < 1.0 => cfg.wrapper.survival_p,
                _ => 0.5,
            };
            let r = expected_masked_loss_quadratic(q, &theta, &delta, p)?;
            print_json(&json!({
                "seed": seed,
                "survival_p": p,
                "exact_expected_loss": r.exact_expected_loss,
                "baseline_loss": r.baseline_loss,
                "regularizer": r.regularizer,
                "formula": r.formula(),
                "discrepancy": r.discrepancy(),
            }))?;
        }
        Diag::Descent(_) => {
            let mut audited = cfg.clone();
            audited.diagnostics.descent_audit = true;
            let out = run_experiment(&audited, seed)?;
            let slacks: Vec<f64> = out.trace.records.iter().filter_map(|r| r.descent_slack).collect();
            print_json(&json!({
                "seed": seed,
                "audited_steps": slacks.len(),
                "min_slack": out.summary.min_descent_slack,
                "violations": slacks.iter().filter(|&&s| s < -1e-8).count(),
                "diverged": out.summary.diverged,
            }))?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, seed, out } => cmd_run(config, *seed, out),
        Command::Sweep { config, grid, out } => cmd_sweep(config, grid, out),
        Command::Verify { quick } => cmd_verify(*quick),
        Command::Diag { which } => cmd_diag(which),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
