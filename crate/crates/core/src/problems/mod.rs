//! Benchmark objectives: rotated block-diagonal quadratics and in-context
//! linear regression with a linear transformer.

use std::sync::Arc;

use crate::error::Result;
use crate::numeric::{BlockLayout, BlockVector, RngStream};

pub mod hessian;
pub mod icl;
pub mod quadratic;

pub use hessian::{fd_hessian, FdHessian, MAX_FD_PARAMS};
pub use icl::{sample_icl_batch, IclBatch, IclConfig, IclProblem, LinearTransformer, Tail};
pub use quadratic::{all_subsets, Arrangement, QuadraticProblem, QuadraticSpec, BENCHMARK_SPECTRUM};

/// A differentiable objective over block-structured parameters.
///
/// `loss` and `gradient` are deterministic (full data or a fixed evaluation
/// set); `stochastic_gradient` draws its minibatch from `rng` and returns the
/// minibatch loss alongside the gradient.
pub trait Objective {
    fn layout(&self) -> &Arc<BlockLayout>;

    fn loss(&self, theta: &BlockVector) -> Result<f64>;

    fn gradient(&self, theta: &BlockVector) -> Result<BlockVector>;

    fn stochastic_gradient(
        &self,
        theta: &BlockVector,
        rng: &mut RngStream,
    ) -> Result<(f64, BlockVector)>;
}
