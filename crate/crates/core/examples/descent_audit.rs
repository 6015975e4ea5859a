//! One-step descent audit of SGD+Magma.
//!
//! At each step the expected next loss (over every mask outcome and every
//! row batch) must stay below `l(θ) - η_L ⟨∇l, E[S M ∇l]⟩` plus the
//! smoothness-weighted second-order term. The slack is that bound minus the
//! exact expectation and should never be negative.
//!
//! ```bash
//! cargo run --release --example descent_audit
//! ```

use magma::diagnostics::descent_audit_step;
use magma::numeric::RngStream;
use magma::optim::{BaseOptimizerConfig, MaskWrapperConfig, MaskedOptimizer};
use magma::problems::{Arrangement, Objective, QuadraticProblem, QuadraticSpec};

fn main() -> magma::Result<()> {
    for arrangement in [Arrangement::Homogeneous, Arrangement::Heterogeneous] {
        let q = QuadraticProblem::build(&QuadraticSpec::benchmark(arrangement, 0))?;
        let l_max = q.block_smoothness()?.into_iter().fold(0.0, f64::max);
        let lr = 1.0 / (2.0 * l_max);
        let mut opt = MaskedOptimizer::new(
            q.layout().clone(),
            BaseOptimizerConfig::sgd(lr),
            MaskWrapperConfig::magma(2.0),
            RngStream::new(0, 3),
        )?;
        let mut theta = q.init_params(&mut RngStream::new(0, 1))?;
        let mut batches = RngStream::new(0, 2);
        let mut min_slack = f64::INFINITY;
        for t in 0..1000 {
            let audit = descent_audit_step(&q, &theta, &opt)?;
            min_slack = min_slack.min(audit.slack);
            if t % 250 == 0 {
                println!(
                    "{arrangement:?} t={t:<4} loss {:.4e}  bound {:.4e}  E[next] {:.4e}  ρ {:.3?}",
                    audit.loss, audit.rhs, audit.lhs, audit.rho
                );
            }
            let (_, g) = q.stochastic_gradient(&theta, &mut batches)?;
            opt.step(&mut theta, &g)?;
        }
        println!("{arrangement:?}: min slack over 1000 steps {min_slack:.3e}\n");
    }
    Ok(())
}
