//! Random block masking of an update adds a curvature penalty to the
//! expected loss.
//!
//! On a quadratic the expected loss after a masked, `1/p`-rescaled step is
//! exactly the unmasked loss plus `Σ_b (1-p)/(2p) Δ_bᵀ H_bb Δ_b`. On a loss
//! with a cubic term the gap to that second-order prediction shrinks like
//! the cube of the step size.
//!
//! ```bash
//! cargo run --release --example skip_update_regularizer
//! ```

use magma::diagnostics::{
    expected_masked_loss_quadratic, fit_remainder_exponent, remainder_residuals, CubicPerturbed,
    Expectation,
};
use magma::numeric::{BlockVector, RngStream};
use magma::optim::{Granularity, MaskUnits};
use magma::problems::{Arrangement, Objective, QuadraticProblem, QuadraticSpec};

fn main() -> magma::Result<()> {
    let q = QuadraticProblem::build(&QuadraticSpec::benchmark(Arrangement::Heterogeneous, 0))?;
    let theta = q.init_params(&mut RngStream::new(7, 1))?;
    let mut delta = q.grad_at(&theta)?;
    delta.scale(1e-4);

    println!("quadratic, exact enumeration over 2^3 block masks");
    println!("{:>6} {:>16} {:>16} {:>16} {:>10}", "p", "E[l]", "l(θ-Δ)+R", "R", "gap");
    for p in [0.25, 0.5, 0.75, 1.0] {
        let r = expected_masked_loss_quadratic(&q, &theta, &delta, p)?;
        println!(
            "{p:>6} {:>16.8e} {:>16.8e} {:>16.8e} {:>10.1e}",
            r.exact_expected_loss,
            r.formula(),
            r.regularizer,
            r.discrepancy()
        );
    }

    // The cubic term breaks exactness; the remainder is third order.
    let cubic = CubicPerturbed { problem: &q, alpha: 0.01 };
    let h = cubic.hessian_at(&theta)?;
    let units = MaskUnits::new(q.layout(), Granularity::Block);
    let scales = [1.0, 0.5, 0.25, 0.125];
    let points = remainder_residuals(
        |w: &BlockVector| cubic.loss(w),
        &h,
        &theta,
        &delta,
        &units,
        0.5,
        &scales,
        Expectation::Enumerate,
    )?;
    println!("\ncubic-perturbed loss, p = 0.5");
    for pt in &points {
        println!("  step scale {:>6}: |E[l] - prediction| = {:.3e}", pt.scale, pt.residual);
    }
    println!("  fitted exponent: {:.4}", fit_remainder_exponent(&points)?);
    Ok(())
}
