//! One-step descent audit for masked SGD on quadratics, and the block-wise
//! smoothness and noise profile it relies on.
//!
//! The audited update is written as `θ' = θ - η S M(g)` with `M(g)_b =
//! (m_b/p) g_b` and `S = diag(s_b I)`. The optimizer's own rule maps onto this
//! form as follows.
//!
//! | mode      | own rule            | η            | S   | p |
//! |-----------|---------------------|--------------|-----|---|
//! | none      | `θ - ηg`            | η            | I   | 1 |
//! | skip      | `θ - η (m/p) g`     | η            | I   | p |
//! | magma     | `θ - η s m g`       | η·p          | s   | p |
//! | damp_only | `θ - η s g`         | η            | s   | 1 |
//!
//! Expectations over masks are exact (all `2^B` outcomes); expectations over
//! minibatches are exact over every row subset.

use serde::Serialize;

use super::regularizer::for_each_mask_outcome;
use crate::error::{Error, Result};
use crate::numeric::BlockVector;
use crate::optim::{BaseKind, Granularity, MaskDraw, MaskMode, MaskedOptimizer};
use crate::problems::{all_subsets, QuadraticProblem};

/// Per-block smoothness `L_b = λ_max(H_bb)` and gradient-noise excess
/// `σ_b² = E‖g_b‖² - ‖∇_b l‖²` at a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessProfile {
    pub smoothness: Vec<f64>,
    pub noise: Vec<f64>,
}

impl SmoothnessProfile {
    pub fn at(problem: &QuadraticProblem, theta: &BlockVector) -> Result<Self> {
        let grad = problem.grad_at(theta)?;
        let batches = all_batches(problem);
        let blocks = theta.num_blocks();
        let mut second = vec![0.0; blocks];
        for rows in &batches {
            let (_, g) = problem.grad_for_rows(theta, rows)?;
            for (b, n) in g.block_norms().iter().enumerate() {
                second[b] += n * n / batches.len() as f64;
            }
        }
        let noise = second
            .iter()
            .zip(grad.block_norms())
            .map(|(s, n)| (s - n * n).max(0.0))
            .collect();
        Ok(Self {
            smoothness: problem.block_smoothness()?,
            noise,
        })
    }

    /// `‖g‖²_L = Σ_b L_b ‖g_b‖²`
    pub fn weighted_norm_sq(&self, g: &BlockVector) -> f64 {
        g.block_norms()
            .iter()
            .zip(&self.smoothness)
            .map(|(n, l)| l * n * n)
            .sum()
    }
}

fn all_batches(problem: &QuadraticProblem) -> Vec<Vec<usize>> {
    all_subsets(problem.dim(), problem.batch_size())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescentAudit {
    /// `l(θ_t)`
    pub loss: f64,
    /// Exact `E_t[l(θ_{t+1})]`.
    pub lhs: f64,
    /// `l(θ_t) - η E[gᵀS∇l] + η²/(2p) E‖Sg‖²_L`
    pub rhs: f64,
    /// `rhs - lhs`
    pub slack: f64,
    /// Step size of the audited form (see the module table).
    pub effective_lr: f64,
    pub p: f64,
    /// `ρ_b = E‖s_b g_b‖² / E‖g_b‖²`
    pub rho: Vec<f64>,
    /// `L̃_b = ρ_b L_b / p`
    pub effective_smoothness: Vec<f64>,
    pub profile: SmoothnessProfile,
}

/// Audit the next step `optimizer` would take from `theta`. The optimizer is
/// cloned for every (batch, mask) outcome and left untouched.
pub fn descent_audit_step(
    problem: &QuadraticProblem,
    theta: &BlockVector,
    optimizer: &MaskedOptimizer,
) -> Result<DescentAudit> {
    let base = optimizer.base_config();
    let wrapper = optimizer.wrapper_config();
    if base.kind != BaseKind::Sgd {
        return Err(Error::Diagnostic(format!(
            "descent audit is defined for SGD, got {:?}",
            base.kind
        )));
    }
    if wrapper.granularity != Granularity::Block {
        return Err(Error::Diagnostic("descent audit needs block granularity".into()));
    }
    if !wrapper.dense_moments || wrapper.unbiased_magma || wrapper.mode == MaskMode::Cautious {
        return Err(Error::Diagnostic(format!(
            "descent audit does not cover mode {:?} with dense_moments={} unbiased_magma={}",
            wrapper.mode, wrapper.dense_moments, wrapper.unbiased_magma
        )));
    }
    let p = optimizer.survival_p();
    let lr = base.learning_rate;
    let effective_lr = if wrapper.mode == MaskMode::Magma { lr * p } else { lr };
    let damped = wrapper.damps();

    let blocks = theta.num_blocks();
    let loss = problem.loss_at(theta)?;
    let grad = problem.grad_at(theta)?;
    let profile = SmoothnessProfile::at(problem, theta)?;
    let batches = all_batches(problem);
    let weight = 1.0 / batches.len() as f64;
    let keep_all = vec![true; optimizer.units().len()];

    let (mut lhs, mut first, mut second) = (0.0, 0.0, 0.0);
    let mut rho_num = vec![0.0; blocks];
    let mut rho_den = vec![0.0; blocks];
    for rows in &batches {
        let (_, g) = problem.grad_for_rows(theta, rows)?;
        let mut probe = optimizer.clone();
        let mut next = theta.clone();
        let record = probe.step_with(&mut next, &g, MaskDraw::Fixed(&keep_all))?;
        let s: Vec<f64> = if damped {
            record.scale.clone()
        } else {
            vec![1.0; blocks]
        };
        for b in 0..blocks {
            let gb = g.block(b)?;
            let gl: f64 = gb.iter().zip(grad.block(b)?).map(|(x, y)| x * y).sum();
            let gg: f64 = gb.iter().map(|x| x * x).sum();
            first += weight * s[b] * gl;
            second += weight * profile.smoothness[b] * s[b] * s[b] * gg;
            rho_num[b] += weight * s[b] * s[b] * gg;
            rho_den[b] += weight * gg;
        }
        if p < 1.0 {
            for_each_mask_outcome(blocks, p, |mask, prob| {
                let mut probe = optimizer.clone();
                let mut next = theta.clone();
                probe.step_with(&mut next, &g, MaskDraw::Fixed(mask))?;
                lhs += weight * prob * problem.loss_at(&next)?;
                Ok(())
            })?;
        } else {
            lhs += weight * problem.loss_at(&next)?;
        }
    }
    let rhs = loss - effective_lr * first + effective_lr * effective_lr / (2.0 * p) * second;
    let rho: Vec<f64> = rho_num
        .iter()
        .zip(&rho_den)
        .map(|(n, d)| if *d > 0.0 { n / d } else { 1.0 })
        .collect();
    let effective_smoothness = rho
        .iter()
        .zip(&profile.smoothness)
        .map(|(r, l)| r * l / p)
        .collect();
    Ok(DescentAudit {
        loss,
        lhs,
        rhs,
        slack: rhs - lhs,
        effective_lr,
        p,
        rho,
        effective_smoothness,
        profile,
    })
}
