//! Survival probability by temperature sweep (3 × 4 cells), written as CSV.
//!
//! ```bash
//! cargo run --release --example p_tau_sweep -- /tmp/p_tau.csv
//! ```

use magma::harness::{sweep, write_sweep_csv, ExperimentConfig, ProblemConfig, SweepGrid};
use magma::optim::{BaseOptimizerConfig, MaskWrapperConfig};
use magma::problems::{Arrangement, QuadraticSpec};

fn main() -> magma::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "p_tau_sweep.csv".into());
    let cfg = ExperimentConfig::new(
        ProblemConfig::Quadratic(QuadraticSpec::benchmark(Arrangement::Heterogeneous, 0)),
        BaseOptimizerConfig::adamw(1e-2, 0.0),
        2000,
    )
    .with_wrapper(MaskWrapperConfig::magma(2.0));
    let grid = SweepGrid {
        survival_p: vec![0.25, 0.5, 0.75],
        temperature: vec![0.5, 1.0, 2.0, 4.0],
        ..Default::default()
    };
    let table = sweep(&cfg, &grid)?;
    println!("{:>6} {:>6} {:>14}", "p", "tau", "mean final");
    for r in &table.rows {
        println!("{:>6} {:>6} {:>14.4e}", r.survival_p, r.temperature, r.score());
    }
    write_sweep_csv(&table, &out)?;
    println!("wrote {out}");
    Ok(())
}
