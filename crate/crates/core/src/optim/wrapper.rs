//! The masking wrapper around a base optimizer.
//!
//! One step, for every mode:
//!
//! 1. draw one uniform per masking unit from the wrapper stream;
//! 2. advance the moments with `g` (only kept units when moments are sparse);
//! 3. score every unit by `sigmoid(cossim(μ, g) / τ)` and fold the score into
//!    the alignment EMA `s = keep·s_prev + new·score`;
//! 4. compute the base update `Δ`;
//! 5. apply `θ -= factor_u · Δ` per unit, where `factor_u` is `1` (none),
//!    `m/p` (skip), `s·m` (magma), `s` (damp-only) or the cautious rescale.
//!
//! Scores and the EMA are maintained in every mode so traces stay
//! comparable; only `magma` and `damp_only` act on them.

use std::sync::Arc;

use super::base::{base_step, MomentState};
use super::config::{BaseOptimizerConfig, MaskMode, MaskWrapperConfig};
use super::masking::{cautious_mask, draw_uniforms, MaskUnits};
use crate::error::{check_len, Result};
use crate::numeric::{cossim, sigmoid, BlockLayout, BlockVector, RngStream};

/// Neutral starting value of the alignment EMA.
pub const INITIAL_SCALE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct WrapperState {
    /// Alignment EMA `s_{t-1}`, one entry per masking unit.
    pub s_prev: Vec<f64>,
    pub rng: RngStream,
}

/// What happened to each masking unit during one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Raw `cossim(μ, g)` per unit.
    pub alignment: Vec<f64>,
    /// `sigmoid(alignment / τ)` per unit.
    pub score: Vec<f64>,
    /// Alignment EMA `s_t` per unit.
    pub scale: Vec<f64>,
    pub mask: Vec<bool>,
    /// Multiplier applied to `Δ` per unit.
    pub factor: Vec<f64>,
    /// `‖s ⊙ g_b‖² / ‖g_b‖²` per block with the damping scale actually used
    /// (1 when the mode does not damp).
    pub rho: Vec<f64>,
}

/// Source of this step's Bernoulli masks.
#[derive(Debug, Clone, Copy)]
pub enum MaskDraw<'a> {
    /// Draw from the wrapper's stream.
    Sample,
    /// Use the given masks and leave the stream untouched.
    Fixed(&'a [bool]),
}

#[derive(Debug, Clone)]
pub struct MaskedOptimizer {
    base: BaseOptimizerConfig,
    wrapper: MaskWrapperConfig,
    units: MaskUnits,
    moments: MomentState,
    state: WrapperState,
}

impl MaskedOptimizer {
    pub fn new(
        layout: Arc<BlockLayout>,
        base: BaseOptimizerConfig,
        wrapper: MaskWrapperConfig,
        rng: RngStream,
    ) -> Result<Self> {
        base.validate()?;
        wrapper.validate()?;
        let units = MaskUnits::new(&layout, wrapper.granularity);
        let state = WrapperState {
            s_prev: vec![INITIAL_SCALE; units.len()],
            rng,
        };
        Ok(Self {
            moments: MomentState::zeros(layout),
            base,
            wrapper,
            units,
            state,
        })
    }

    pub fn base_config(&self) -> &BaseOptimizerConfig {
        &self.base
    }

    pub fn wrapper_config(&self) -> &MaskWrapperConfig {
        &self.wrapper
    }

    pub fn units(&self) -> &MaskUnits {
        &self.units
    }

    pub fn moments(&self) -> &MomentState {
        &self.moments
    }

    pub fn wrapper_state(&self) -> &WrapperState {
        &self.state
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.base.learning_rate = lr;
    }

    /// Survival probability used for the Bernoulli draws of this mode.
    pub fn survival_p(&self) -> f64 {
        match self.wrapper.mode {
            MaskMode::Skip | MaskMode::Magma => self.wrapper.survival_p,
            _ => 1.0,
        }
    }

    pub fn step(&mut self, theta: &mut BlockVector, g: &BlockVector) -> Result<StepRecord> {
        self.step_with(theta, g, MaskDraw::Sample)
    }

    pub fn step_with(
        &mut self,
        theta: &mut BlockVector,
        g: &BlockVector,
        draw: MaskDraw<'_>,
    ) -> Result<StepRecord> {
        theta.ensure_same_layout(g)?;
        let n_units = self.units.len();
        let cfg = &self.wrapper;
        let mode = cfg.mode;

        let uniforms = match draw {
            MaskDraw::Sample => Some(draw_uniforms(n_units, &mut self.state.rng)),
            MaskDraw::Fixed(m) => {
                check_len(n_units, m.len())?;
                None
            }
        };
        let threshold = |u: usize, p: f64| -> bool {
            match (&uniforms, draw) {
                (Some(us), _) => us[u] < p,
                (None, MaskDraw::Fixed(m)) => m[u],
                (None, MaskDraw::Sample) => unreachable!(),
            }
        };

        // Masks with a fixed survival probability are known before the moment
        // update, which the sparse-moment ablation needs.
        let p = self.survival_p();
        let mut mask: Vec<bool> = (0..n_units)
            .map(|u| match mode {
                MaskMode::Skip | MaskMode::Magma => threshold(u, p),
                _ => true,
            })
            .collect();

        let mu_prev = cfg.align_pre_update.then(|| self.moments.mu.clone());
        if cfg.dense_moments {
            self.moments.update(g, &self.base, None)?;
        } else {
            self.moments
                .update(g, &self.base, Some((&self.units, &mask)))?;
        }
        let mu = mu_prev.as_ref().unwrap_or(&self.moments.mu);

        let mut alignment = Vec::with_capacity(n_units);
        let mut score = Vec::with_capacity(n_units);
        for u in 0..n_units {
            let a = cossim(
                &self.units.gather(u, mu.as_slice()),
                &self.units.gather(u, g.as_slice()),
            )?;
            alignment.push(a);
            score.push(sigmoid(a / cfg.temperature));
        }
        for (s, &sc) in self.state.s_prev.iter_mut().zip(&score) {
            *s = cfg.ema_keep * *s + cfg.ema_new * sc;
        }
        let scale: Vec<f64> = match cfg.fixed_scale {
            Some(c) => vec![c; n_units],
            None => self.state.s_prev.clone(),
        };

        if mode == MaskMode::Magma && cfg.unbiased_magma {
            for (u, m) in mask.iter_mut().enumerate() {
                *m = threshold(u, score[u]);
            }
        }

        let delta = base_step(theta, g, &self.moments, &self.base)?;

        let factor: Vec<f64> = (0..n_units)
            .map(|u| {
                let m = if mask[u] { 1.0 } else { 0.0 };
                match mode {
                    MaskMode::None | MaskMode::Cautious => 1.0,
                    MaskMode::Skip => m / p,
                    MaskMode::Magma if cfg.unbiased_magma => m / score[u],
                    MaskMode::Magma => scale[u] * m,
                    MaskMode::DampOnly => scale[u],
                }
            })
            .collect();

        let th = theta.as_mut_slice();
        for u in 0..n_units {
            let idx = self.units.members(u);
            if mode == MaskMode::Cautious {
                let d: Vec<f64> = idx.iter().map(|&i| delta[i]).collect();
                let gu: Vec<f64> = idx.iter().map(|&i| g[i]).collect();
                for (&i, c) in idx.iter().zip(cautious_mask(&d, &gu)?) {
                    th[i] -= c;
                }
            } else {
                let f = factor[u];
                for &i in idx {
                    th[i] -= f * delta[i];
                }
            }
        }

        let rho = self.block_rho(g, if cfg.damps() { Some(&scale) } else { None });
        Ok(StepRecord {
            alignment,
            score,
            scale,
            mask,
            factor,
            rho,
        })
    }

    fn block_rho(&self, g: &BlockVector, scale: Option<&[f64]>) -> Vec<f64> {
        let blocks = g.layout().num_blocks();
        let mut num = vec![0.0; blocks];
        let mut den = vec![0.0; blocks];
        // fallback for blocks with a zero gradient: mean of s² over the block
        let mut s2 = vec![(0.0, 0usize); blocks];
        for u in 0..self.units.len() {
            let b = self.units.block_of(u);
            let s = scale.map_or(1.0, |s| s[u]);
            let gg: f64 = self.units.members(u).iter().map(|&i| g[i] * g[i]).sum();
            num[b] += s * s * gg;
            den[b] += gg;
            s2[b].0 += s * s;
            s2[b].1 += 1;
        }
        (0..blocks)
            .map(|b| {
                if den[b] > 0.0 {
                    num[b] / den[b]
                } else {
                    s2[b].0 / s2[b].1 as f64
                }
            })
            .collect()
    }
}
