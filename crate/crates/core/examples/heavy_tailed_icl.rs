//! In-context linear regression with a three-layer linear transformer under
//! light- and heavy-tailed covariates, Adam against Adam+Magma.
//!
//! Heavy-tailed covariates are uniform directions scaled by `√Γ(0.1, 10)`,
//! which makes the stochastic gradients heavy tailed. The run records the
//! robust condition number `λ_max/median` of the finite-difference Hessian
//! along the trajectory.
//!
//! ```bash
//! cargo run --release --example heavy_tailed_icl -- 1500
//! ```
//!
//! The optional argument is the number of steps (default 1000).

use magma::harness::{run_experiment, ExperimentConfig, ProblemConfig};
use magma::optim::{BaseOptimizerConfig, MaskMode, MaskWrapperConfig};
use magma::problems::{IclConfig, Tail};

fn main() -> magma::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1000);
    for tail in [Tail::Light, Tail::Heavy] {
        let mut icl = IclConfig::new(tail);
        icl.batch_size = 32;
        for (name, wrapper, lr) in [
            ("adam", MaskWrapperConfig::new(MaskMode::None), 5e-4),
            ("adam+magma", MaskWrapperConfig::magma(2.0), 1e-2),
        ] {
            let mut cfg = ExperimentConfig::new(
                ProblemConfig::Icl(icl.clone()),
                BaseOptimizerConfig::adam(lr),
                steps,
            )
            .with_wrapper(wrapper)
            .with_seeds([0, 1, 2]);
            cfg.trace_stride = 50;
            cfg.diagnostics.condition_number = tail == Tail::Heavy;
            cfg.diagnostics.condition_stride = steps.div_ceil(4);
            for &seed in &cfg.seeds {
                let s = run_experiment(&cfg, seed)?.summary;
                println!(
                    "{tail:?} {name:<11} lr {lr:<7} seed {seed}: final {:.4e}  best {:.4e}  median cond {}{}",
                    s.final_loss,
                    s.best_loss,
                    s.median_condition_number.map_or("-".into(), |c| format!("{c:.1}")),
                    if s.diverged { "  (diverged)" } else { "" }
                );
            }
        }
    }
    Ok(())
}
