//! Learning-rate sweep per wrapper mode on the heterogeneous quadratic.
//!
//! Prints each mode's mean final loss per learning rate, its best rate and
//! the largest rate at which no seed diverged. Pass `wide` to extend the
//! grid past 1e-2, where the damped variants keep improving.
//!
//! ```bash
//! cargo run --release --example lr_sensitivity
//! cargo run --release --example lr_sensitivity -- wide
//! ```

use magma::harness::{sweep, ExperimentConfig, ProblemConfig, SweepGrid};
use magma::optim::{BaseOptimizerConfig, MaskMode};
use magma::problems::{Arrangement, QuadraticSpec};

fn main() -> magma::Result<()> {
    let wide = std::env::args().nth(1).as_deref() == Some("wide");
    let mut lrs = vec![1e-4, 5e-4, 1e-3, 5e-3, 1e-2];
    if wide {
        lrs.extend([2e-2, 5e-2, 0.1, 0.2, 0.5, 1.0]);
    }
    let modes = [MaskMode::None, MaskMode::Skip, MaskMode::Magma, MaskMode::DampOnly];
    let cfg = ExperimentConfig::new(
        ProblemConfig::Quadratic(QuadraticSpec::benchmark(Arrangement::Heterogeneous, 0)),
        BaseOptimizerConfig::adamw(1e-3, 0.0),
        2000,
    );
    let grid = SweepGrid {
        learning_rate: lrs.clone(),
        mode: modes.to_vec(),
        ..Default::default()
    };
    let table = sweep(&cfg, &grid)?;

    print!("{:>10}", "lr");
    for m in modes {
        print!("{:>14}", format!("{m:?}"));
    }
    println!();
    for lr in &lrs {
        print!("{lr:>10.0e}");
        for m in modes {
            let row = table.best(|r| r.mode == m && r.learning_rate == *lr).expect("cell");
            print!("{:>14.4e}", row.score());
        }
        println!();
    }
    for m in modes {
        let best = table.best(|r| r.mode == m).expect("mode");
        let stable = table
            .rows
            .iter()
            .filter(|r| r.mode == m && r.is_stable())
            .map(|r| r.learning_rate)
            .fold(f64::NAN, f64::max);
        println!("{m:?}: best lr {:e} ({:.4e}), largest stable lr {stable:e}", best.learning_rate, best.score());
    }
    Ok(())
}
