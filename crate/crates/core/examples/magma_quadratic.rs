//! AdamW with and without Magma on the two rotated block quadratics.
//!
//! Both problems share one spectrum. In the homogeneous one every block holds
//! eigenvalues of one scale; in the heterogeneous one every block mixes
//! `1`, `~100` and `~5000`. The example prints the final loss per seed and the
//! per-block gradient-momentum alignment averaged over the run.
//!
//! ```bash
//! cargo run --release --example magma_quadratic -- 0.2
//! ```
//!
//! The optional argument is the learning rate (default 0.01).

use magma::diagnostics::{alignment_trace, AlignmentSample};
use magma::harness::{run_experiment, ExperimentConfig, ProblemConfig};
use magma::optim::{BaseOptimizerConfig, Granularity, MaskUnits, MaskWrapperConfig};
use magma::problems::{Arrangement, QuadraticSpec};
use magma::numeric::BlockLayout;

fn main() -> magma::Result<()> {
    let lr: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.01);
    let units = MaskUnits::new(&BlockLayout::uniform(3, 3)?, Granularity::Block);
    for arrangement in [Arrangement::Homogeneous, Arrangement::Heterogeneous] {
        println!("{arrangement:?}, lr {lr}");
        for (name, wrapper) in [
            ("adamw", MaskWrapperConfig::new(magma::optim::MaskMode::None)),
            ("adamw+magma", MaskWrapperConfig::magma(2.0)),
        ] {
            let cfg = ExperimentConfig::new(
                ProblemConfig::Quadratic(QuadraticSpec::benchmark(arrangement, 0)),
                BaseOptimizerConfig::adamw(lr, 0.0),
                2000,
            )
            .with_wrapper(wrapper);
            let mut finals = Vec::new();
            let mut align = vec![0.0; 3];
            for &seed in &cfg.seeds {
                let out = run_experiment(&cfg, seed)?;
                finals.push(out.summary.final_loss);
                let samples = out.trace.records.iter().map(|r| AlignmentSample {
                    step: r.step,
                    alignment: &r.alignment,
                    scale: &r.scale,
                });
                let whole = alignment_trace(samples, &units, usize::MAX)?;
                for (a, w) in align.iter_mut().zip(&whole[0].alignment) {
                    *a += w / cfg.seeds.len() as f64;
                }
            }
            let mean = finals.iter().sum::<f64>() / finals.len() as f64;
            println!("  {name:<12} mean final loss {mean:.4e}  block alignment {align:.3?}");
        }
    }
    Ok(())
}
