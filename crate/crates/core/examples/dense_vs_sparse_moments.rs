//! Dense against sparse moment updates under Magma.
//!
//! With dense moments every block's first and second moments see every
//! gradient, masked or not. The sparse variant updates them only for blocks
//! that survive the mask, as memory-saving subspace optimizers do.
//!
//! ```bash
//! cargo run --release --example dense_vs_sparse_moments -- 0.01
//! ```

use magma::harness::{sweep, ExperimentConfig, ProblemConfig, SweepGrid};
use magma::optim::{BaseOptimizerConfig, MaskWrapperConfig};
use magma::problems::{Arrangement, QuadraticSpec};

fn main() -> magma::Result<()> {
    let lr: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.01);
    let cfg = ExperimentConfig::new(
        ProblemConfig::Quadratic(QuadraticSpec::benchmark(Arrangement::Heterogeneous, 0)),
        BaseOptimizerConfig::adamw(lr, 0.0),
        2000,
    )
    .with_wrapper(MaskWrapperConfig::magma(2.0));
    let grid = SweepGrid {
        dense_moments: vec![true, false],
        ..Default::default()
    };
    for row in sweep(&cfg, &grid)?.rows {
        println!(
            "dense_moments={:<5} mean final loss {:.4e} ± {:.2e}  diverged {}/{}",
            row.dense_moments,
            row.score(),
            row.std_final_loss.unwrap_or(f64::NAN),
            row.diverged_runs,
            row.seeds
        );
    }
    Ok(())
}
