//! Base optimizer moments and unmasked update directions.

use std::sync::Arc;

use super::config::{BaseKind, BaseOptimizerConfig};
use super::masking::MaskUnits;
use crate::error::{check_len, Error, Result};
use crate::numeric::{BlockLayout, BlockVector};

#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub mu: BlockVector,
    pub v: BlockVector,
    pub step: u64,
}

impl MomentState {
    pub fn zeros(layout: Arc<BlockLayout>) -> Self {
        Self {
            mu: BlockVector::zeros(layout.clone()),
            v: BlockVector::zeros(layout),
            step: 0,
        }
    }

    /// Exponential moving averages of `g` and `g²`.
    ///
    /// With `mask = Some((units, keep))` only kept units advance; the step
    /// counter advances regardless.
    pub fn update(
        &mut self,
        g: &BlockVector,
        cfg: &BaseOptimizerConfig,
        mask: Option<(&MaskUnits, &[bool])>,
    ) -> Result<()> {
        self.mu.ensure_same_layout(g)?;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let g = g.as_slice();
        let mu = self.mu.as_mut_slice();
        let v = self.v.as_mut_slice();
        let mut advance = |i: usize| {
            mu[i] = b1 * mu[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        };
        match mask {
            None => (0..g.len()).for_each(&mut advance),
            Some((units, keep)) => {
                check_len(units.len(), keep.len())?;
                for (u, _) in keep.iter().enumerate().filter(|(_, &k)| k) {
                    units.members(u).iter().copied().for_each(&mut advance);
                }
            }
        }
        self.step += 1;
        Ok(())
    }
}

/// Unmasked update `Δ` such that `θ_next = θ - Δ` for the plain optimizer.
///
/// Expects `state` to already include the current gradient.
pub fn base_step(
    theta: &BlockVector,
    g: &BlockVector,
    state: &MomentState,
    cfg: &BaseOptimizerConfig,
) -> Result<BlockVector> {
    theta.ensure_same_layout(g)?;
    g.ensure_same_layout(&state.mu)?;
    if let Some(i) = state.v.as_slice().iter().position(|&x| !(x >= 0.0)) {
        return Err(Error::State(format!(
            "second moment entry {i} is {}",
            state.v[i]
        )));
    }
    let lr = cfg.learning_rate;
    let t = state.step.max(1) as i32;
    let (c1, c2) = if cfg.bias_correction() {
        (
            1.0 - cfg.beta1.powi(t),
            1.0 - cfg.beta2.powi(t),
        )
    } else {
        (1.0, 1.0)
    };
    let mut delta = BlockVector::zeros_like(g);
    let out = delta.as_mut_slice();
    let (g, mu, v, th) = (
        g.as_slice(),
        state.mu.as_slice(),
        state.v.as_slice(),
        theta.as_slice(),
    );
    match cfg.kind {
        BaseKind::Sgd => {
            for (o, &gi) in out.iter_mut().zip(g) {
                *o = lr * gi;
            }
        }
        BaseKind::Rmsprop => {
            for i in 0..out.len() {
                out[i] = lr * g[i] / ((v[i] / c2).sqrt() + cfg.epsilon);
            }
        }
        BaseKind::Adam | BaseKind::Adamw => {
            let wd = if cfg.kind == BaseKind::Adamw {
                cfg.weight_decay
            } else {
                0.0
            };
            for i in 0..out.len() {
                let m_hat = mu[i] / c1;
                let v_hat = v[i] / c2;
                out[i] = lr * (m_hat / (v_hat.sqrt() + cfg.epsilon) + wd * th[i]);
            }
        }
    }
    Ok(delta)
}
