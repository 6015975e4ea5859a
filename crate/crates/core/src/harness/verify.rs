//! Self-check suite behind the `verify` command.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;

use super::config::{ExperimentConfig, ProblemConfig};
use super::run::run_experiment;
use crate::diagnostics::{
    enumerate_skip_expectation, expected_masked_loss_quadratic, fit_remainder_exponent,
    masking_regularizer, monte_carlo_masked_loss, remainder_residuals, robust_condition_number,
    CubicPerturbed, Expectation,
};
use crate::error::Result;
use crate::numeric::{
    haar_orthogonal, symmetric_eigen, BlockLayout, BlockVector, Matrix, RngStream, SymmetricMatrix,
};
use crate::optim::{BaseOptimizerConfig, Granularity, MaskUnits, MaskWrapperConfig};
use crate::problems::{
    Objective,
    sample_icl_batch, Arrangement, IclConfig, LinearTransformer, QuadraticProblem, QuadraticSpec,
    Tail, BENCHMARK_SPECTRUM,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Property {
    pub pass: bool,
    pub measured: f64,
    pub tolerance: f64,
}

impl Property {
    /// Passes when `measured ≤ tolerance`.
    pub fn at_most(measured: f64, tolerance: f64) -> Self {
        Self {
            pass: measured <= tolerance,
            measured,
            tolerance,
        }
    }

    /// Passes when `measured ≥ -tolerance`.
    pub fn at_least_neg(measured: f64, tolerance: f64) -> Self {
        Self {
            pass: measured >= -tolerance,
            measured,
            tolerance,
        }
    }
}

/// Property name to outcome, serialized as one JSON object.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct VerifyReport(pub BTreeMap<String, Property>);

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.0.values().all(|p| p.pass)
    }

    fn record(&mut self, name: &str, result: Result<Property>) {
        let prop = result.unwrap_or(Property {
            pass: false,
            measured: f64::NAN,
            tolerance: f64::NAN,
        });
        self.0.insert(name.to_string(), prop);
    }
}

pub const PAIRS: usize = 20;
pub const SURVIVAL_GRID: [f64; 3] = [0.25, 0.5, 0.75];

/// 64 ulps at 1.0.
pub const UNBIASED_TOL: f64 = 64.0 * f64::EPSILON;

fn gaussian(layout: &Arc<BlockLayout>, std: f64, rng: &mut RngStream) -> BlockVector {
    let normal = Normal::new(0.0, std).expect("valid std");
    let data = (0..layout.dim()).map(|_| normal.sample(rng)).collect();
    BlockVector::new(data, layout.clone()).expect("layout dimension")
}

fn benchmark(arrangement: Arrangement) -> Result<QuadraticProblem> {
    QuadraticProblem::build(&QuadraticSpec::benchmark(arrangement, 0))
}

/// Largest `|enumerated - formula| / (1 + |l(θ-Δ)|)` over both benchmark
/// quadratics, `PAIRS` random `(θ, Δ)` and every survival probability.
pub fn prop1_exactness(seed: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for arr in [Arrangement::Homogeneous, Arrangement::Heterogeneous] {
        let q = benchmark(arr)?;
        let mut rng = RngStream::new(seed, 0x7031);
        for _ in 0..PAIRS {
            let theta = gaussian(q.layout(), 1.0, &mut rng);
            let delta = gaussian(q.layout(), 0.1, &mut rng);
            for p in SURVIVAL_GRID {
                let r = expected_masked_loss_quadratic(&q, &theta, &delta, p)?;
                worst = worst.max(r.discrepancy() / (1.0 + r.baseline_loss.abs()));
            }
        }
    }
    Ok(worst)
}

/// Fitted exponent of the masking remainder on `½wᵀHw + αΣw³` (exact
/// enumeration, block masks, `p = 0.5`).
pub fn remainder_exponent(alpha: f64) -> Result<f64> {
    let q = benchmark(Arrangement::Heterogeneous)?;
    let mut rng = RngStream::new(0, 0x7265);
    let theta = gaussian(q.layout(), 1.0, &mut rng);
    let delta = gaussian(q.layout(), 1.0, &mut rng);
    let f = CubicPerturbed { problem: &q, alpha };
    let h = f.hessian_at(&theta)?;
    let units = MaskUnits::new(q.layout(), Granularity::Block);
    let pts = remainder_residuals(
        |w| f.loss(w),
        &h,
        &theta,
        &delta,
        &units,
        0.5,
        &[1.0, 0.5, 0.25, 0.125],
        Expectation::Enumerate,
    )?;
    fit_remainder_exponent(&pts)
}

/// Largest relative deviation of the enumerated skip expectation from `Δ`
/// across block, row, column and element units on two 3×3 matrix blocks.
pub fn skip_unbiasedness() -> Result<f64> {
    let layout = Arc::new(BlockLayout::from_matrices(&[(3, 3), (3, 3)])?);
    let mut rng = RngStream::new(0, 0x756e);
    let delta = gaussian(&layout, 1.0, &mut rng);
    let mut worst = 0.0f64;
    for gran in [Granularity::Block, Granularity::Row, Granularity::Column, Granularity::Element] {
        let units = MaskUnits::new(&layout, gran);
        for p in SURVIVAL_GRID {
            let e = enumerate_skip_expectation(&delta, &units, p)?;
            for i in 0..delta.len() {
                worst = worst.max((e[i] - delta[i]).abs() / delta[i].abs().max(f64::MIN_POSITIVE));
            }
        }
    }
    Ok(worst)
}

fn max_rel_fd_error<L, G>(theta: &BlockVector, h: f64, loss: L, grad: G) -> Result<f64>
where
    L: Fn(&BlockVector) -> Result<f64>,
    G: Fn(&BlockVector) -> Result<BlockVector>,
{
    let g = grad(theta)?;
    let scale = g.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    let mut worst = 0.0f64;
    let mut probe = theta.clone();
    for i in 0..theta.len() {
        let x = probe[i];
        probe[i] = x + h;
        let lp = loss(&probe)?;
        probe[i] = x - h;
        let lm = loss(&probe)?;
        probe[i] = x;
        worst = worst.max(((lp - lm) / (2.0 * h) - g[i]).abs() / scale);
    }
    Ok(worst)
}

/// Max relative error of the quadratic gradient against central differences
/// at `PAIRS` random points, relative to the largest gradient entry.
pub fn quadratic_gradient_error() -> Result<f64> {
    let q = benchmark(Arrangement::Heterogeneous)?;
    let mut rng = RngStream::new(0, 0x7167);
    let mut worst = 0.0f64;
    for _ in 0..PAIRS {
        let theta = gaussian(q.layout(), 1.0, &mut rng);
        worst = worst.max(max_rel_fd_error(&theta, 1e-6, |w| q.loss_at(w), |w| q.grad_at(w))?);
    }
    Ok(worst)
}

/// Same for the transformer loss at small random parameters, both tails.
pub fn transformer_gradient_error(points: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for (k, tail) in [Tail::Light, Tail::Heavy].into_iter().enumerate() {
        let cfg = IclConfig::new(tail);
        let model = LinearTransformer::from_config(&cfg)?;
        let batch = sample_icl_batch(&cfg, 8, &mut RngStream::new(k as u64, 0x6c62))?;
        let mut rng = RngStream::new(k as u64, 0x6c70);
        for _ in 0..points {
            let params = model.init_params(0.2, &mut rng)?;
            worst = worst.max(max_rel_fd_error(
                &params,
                1e-5,
                |p| model.loss(p, &batch),
                |p| Ok(model.loss_grad(p, &batch)?.1),
            )?);
        }
    }
    Ok(worst)
}

/// Minimum descent-audit slack over an SGD+Magma run with `η = 1/(2 L_max)`
/// on both benchmark quadratics.
pub fn descent_audit_min_slack(steps: usize) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for arr in [Arrangement::Homogeneous, Arrangement::Heterogeneous] {
        let spec = QuadraticSpec::benchmark(arr, 0);
        let l_max = BENCHMARK_SPECTRUM.iter().copied().fold(0.0, f64::max);
        let mut cfg = ExperimentConfig::new(
            ProblemConfig::Quadratic(spec),
            BaseOptimizerConfig::sgd(1.0 / (2.0 * l_max)),
            steps,
        )
        .with_wrapper(MaskWrapperConfig::magma(2.0));
        cfg.diagnostics.descent_audit = true;
        let out = run_experiment(&cfg, 0)?;
        worst = worst.min(out.summary.min_descent_slack.unwrap_or(f64::NEG_INFINITY));
    }
    Ok(worst)
}

/// Number of standard errors between Monte Carlo and enumeration, block
/// units, and between Monte Carlo and the diagonal formula, element units on
/// a diagonal quadratic.
pub fn monte_carlo_agreement(samples: usize) -> Result<(f64, f64)> {
    let q = benchmark(Arrangement::Heterogeneous)?;
    let mut rng = RngStream::new(0, 0x6d63);
    let theta = gaussian(q.layout(), 1.0, &mut rng);
    let delta = gaussian(q.layout(), 0.05, &mut rng);
    let exact = expected_masked_loss_quadratic(&q, &theta, &delta, 0.5)?;
    let units = MaskUnits::new(q.layout(), Granularity::Block);
    let mc = monte_carlo_masked_loss(|w| q.loss_at(w), &theta, &delta, &units, 0.5, samples, &mut rng)?;
    let block_z = (mc.mean - exact.exact_expected_loss).abs() / mc.stderr;

    let layout = q.layout().clone();
    let diag = QuadraticProblem::from_hessian(SymmetricMatrix::from_diagonal(&BENCHMARK_SPECTRUM), layout.clone(), 3)?;
    let elems = MaskUnits::new(&layout, Granularity::Element);
    let mut base = theta.clone();
    base.axpy(-1.0, &delta)?;
    let formula = diag.loss_at(&base)? + masking_regularizer(diag.hessian(), &delta, &elems, 0.5)?;
    let mc = monte_carlo_masked_loss(|w| diag.loss_at(w), &theta, &delta, &elems, 0.5, samples, &mut rng)?;
    Ok((block_z, (mc.mean - formula).abs() / mc.stderr))
}

/// Eigen reconstruction error of a random 9×9 symmetric matrix relative to
/// its Frobenius norm.
pub fn eigen_reconstruction() -> Result<f64> {
    let mut rng = RngStream::new(0, 0x6569);
    let n = 9;
    let data: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let m = SymmetricMatrix::symmetrized(&Matrix::from_row_major(n, n, data)?)?;
    let e = symmetric_eigen(&m)?;
    Ok(e.reconstruct_with(|x| x).distance(m.matrix()) / m.matrix().frobenius())
}

/// `‖QᵀQ - I‖_F` of a 9×9 Haar draw.
pub fn haar_orthogonality() -> Result<f64> {
    let q = haar_orthogonal(9, &mut RngStream::new(0, 0x6871));
    Ok(q.transpose().matmul(&q)?.distance(&Matrix::identity(9)))
}

/// Difference in final loss between the plain optimizer and skip masking at
/// full survival.
pub fn wrapper_degeneracy() -> Result<f64> {
    let cfg = ExperimentConfig::new(
        ProblemConfig::Quadratic(QuadraticSpec::benchmark(Arrangement::Heterogeneous, 0)),
        BaseOptimizerConfig::adamw(1e-2, 0.0),
        200,
    );
    let plain = run_experiment(&cfg, 0)?.summary.final_loss;
    let skip = run_experiment(&cfg.clone().with_wrapper(MaskWrapperConfig::skip(1.0)), 0)?
        .summary
        .final_loss;
    Ok((plain - skip).abs())
}

/// Run every check. `quick` shortens the descent-audit run and Monte Carlo
/// sample counts for use inside unit tests.
pub fn verify(quick: bool) -> VerifyReport {
    let mut r = VerifyReport::default();
    r.record("prop1_exactness", prop1_exactness(0).map(|m| Property::at_most(m, 1e-10)));
    r.record(
        "remainder_exponent",
        remainder_exponent(0.01).map(|s| Property {
            pass: (2.7..=3.3).contains(&s),
            measured: s,
            tolerance: 0.3,
        }),
    );
    r.record("skip_unbiasedness", skip_unbiasedness().map(|m| Property::at_most(m, UNBIASED_TOL)));
    r.record("quadratic_gradient_fd", quadratic_gradient_error().map(|m| Property::at_most(m, 1e-6)));
    r.record(
        "transformer_gradient_fd",
        transformer_gradient_error(if quick { 2 } else { PAIRS }).map(|m| Property::at_most(m, 1e-5)),
    );
    r.record(
        "descent_audit_slack",
        descent_audit_min_slack(if quick { 100 } else { 1000 }).map(|m| Property::at_least_neg(m, 1e-8)),
    );
    match monte_carlo_agreement(if quick { 20_000 } else { 100_000 }) {
        Ok((block, elem)) => {
            r.record("mc_block_vs_enumeration", Ok(Property::at_most(block, 4.0)));
            r.record("mc_element_vs_diagonal_formula", Ok(Property::at_most(elem, 4.0)));
        }
        Err(e) => {
            r.record("mc_block_vs_enumeration", Err(e));
            r.record("mc_element_vs_diagonal_formula", Ok(Property::at_most(f64::NAN, 4.0)));
        }
    }
    r.record(
        "robust_condition_benchmark",
        robust_condition_number(&SymmetricMatrix::from_diagonal(&BENCHMARK_SPECTRUM))
            .map(|c| Property::at_most((c - 50.0).abs(), 1e-12)),
    );
    r.record("eigen_reconstruction", eigen_reconstruction().map(|m| Property::at_most(m, 1e-8)));
    r.record("haar_orthogonality", haar_orthogonality().map(|m| Property::at_most(m, 1e-10)));
    r.record("wrapper_degeneracy", wrapper_degeneracy().map(|m| Property::at_most(m, 0.0)));
    r
}
