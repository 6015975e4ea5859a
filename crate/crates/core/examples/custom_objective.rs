//! Driving the masked optimizer on a user-defined objective.
//!
//! Any type implementing `Objective` (a block layout, a loss, a gradient and
//! a stochastic gradient) can be optimized step by step with
//! `MaskedOptimizer`. Here: a chain of two-dimensional Rosenbrock valleys, one
//! per block, with additive gradient noise whose scale differs by block.
//!
//! ```bash
//! cargo run --release --example custom_objective
//! ```

use std::sync::Arc;

use magma::numeric::{BlockLayout, BlockVector, RngStream};
use magma::optim::{BaseOptimizerConfig, MaskMode, MaskWrapperConfig, MaskedOptimizer};
use magma::problems::Objective;
use rand_distr::{Distribution, StandardNormal};

struct NoisyRosenbrock {
    layout: Arc<BlockLayout>,
    noise: Vec<f64>,
}

impl NoisyRosenbrock {
    fn new(noise: Vec<f64>) -> magma::Result<Self> {
        Ok(Self {
            layout: Arc::new(BlockLayout::uniform(noise.len(), 2)?),
            noise,
        })
    }
}

impl Objective for NoisyRosenbrock {
    fn layout(&self) -> &Arc<BlockLayout> {
        &self.layout
    }

    fn loss(&self, theta: &BlockVector) -> magma::Result<f64> {
        Ok(theta
            .blocks()
            .map(|b| (1.0 - b[0]).powi(2) + 100.0 * (b[1] - b[0] * b[0]).powi(2))
            .sum())
    }

    fn gradient(&self, theta: &BlockVector) -> magma::Result<BlockVector> {
        let mut g = BlockVector::zeros_like(theta);
        for (b, out) in theta.blocks().zip(g.as_mut_slice().chunks_mut(2)) {
            let r = b[1] - b[0] * b[0];
            out[0] = -2.0 * (1.0 - b[0]) - 400.0 * b[0] * r;
            out[1] = 200.0 * r;
        }
        Ok(g)
    }

    fn stochastic_gradient(&self, theta: &BlockVector, rng: &mut RngStream) -> magma::Result<(f64, BlockVector)> {
        let mut g = self.gradient(theta)?;
        for (out, &sigma) in g.as_mut_slice().chunks_mut(2).zip(&self.noise) {
            for v in out {
                let z: f64 = StandardNormal.sample(rng);
                *v += sigma * z;
            }
        }
        Ok((self.loss(theta)?, g))
    }
}

fn main() -> magma::Result<()> {
    let problem = NoisyRosenbrock::new(vec![0.1, 1.0, 10.0])?;
    for (name, wrapper) in [
        ("adam", MaskWrapperConfig::new(MaskMode::None)),
        ("adam+skip", MaskWrapperConfig::skip(0.5)),
        ("adam+magma", MaskWrapperConfig::magma(2.0)),
    ] {
        let mut total = 0.0;
        for seed in 0..5 {
            let mut opt = MaskedOptimizer::new(
                problem.layout().clone(),
                BaseOptimizerConfig::adam(1e-2),
                wrapper.clone(),
                RngStream::new(seed, 3),
            )?;
            let mut theta = BlockVector::new(vec![-1.2, 1.0, -1.2, 1.0, -1.2, 1.0], problem.layout().clone())?;
            let mut rng = RngStream::new(seed, 2);
            for _ in 0..3000 {
                let (_, g) = problem.stochastic_gradient(&theta, &mut rng)?;
                opt.step(&mut theta, &g)?;
            }
            total += problem.loss(&theta)?;
        }
        println!("{name:<11} mean final loss over 5 seeds: {:.4e}", total / 5.0);
    }
    Ok(())
}
