use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    Sgd,
    Rmsprop,
    Adam,
    Adamw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseOptimizerConfig {
    pub kind: BaseKind,
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Decoupled weight decay; only read by `adamw`.
    #[serde(default)]
    pub weight_decay: f64,
    /// Defaults to on for adam/adamw and off for sgd/rmsprop.
    #[serde(default)]
    pub bias_correction: Option<bool>,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_epsilon() -> f64 {
    1e-8
}

impl BaseOptimizerConfig {
    pub fn new(kind: BaseKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
            weight_decay: 0.0,
            bias_correction: None,
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(BaseKind::Sgd, learning_rate)
    }

    pub fn rmsprop(learning_rate: f64) -> Self {
        Self::new(BaseKind::Rmsprop, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(BaseKind::Adam, learning_rate)
    }

    pub fn adamw(learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            weight_decay,
            ..Self::new(BaseKind::Adamw, learning_rate)
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    pub fn with_bias_correction(mut self, on: bool) -> Self {
        self.bias_correction = Some(on);
        self
    }

    pub fn bias_correction(&self) -> bool {
        self.bias_correction
            .unwrap_or(matches!(self.kind, BaseKind::Adam | BaseKind::Adamw))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("beta1 and beta2 must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Plain base optimizer.
    None,
    /// Unbiased Bernoulli masking rescaled by `1/p` (SkipUpdate).
    Skip,
    /// Alignment-damped Bernoulli masking.
    Magma,
    /// Alignment damping without masking.
    DampOnly,
    /// Sign-agreement masking baseline.
    Cautious,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Block,
    Row,
    Column,
    Element,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskWrapperConfig {
    pub mode: MaskMode,
    /// Bernoulli survival probability for `skip` and `magma`.
    #[serde(default = "default_survival_p")]
    pub survival_p: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_ema_keep")]
    pub ema_keep: f64,
    #[serde(default = "default_ema_new")]
    pub ema_new: f64,
    #[serde(default = "default_granularity")]
    pub granularity: Granularity,
    #[serde(default = "default_true")]
    pub dense_moments: bool,
    /// Score alignment against the momentum before this step's update.
    #[serde(default)]
    pub align_pre_update: bool,
    /// Use the raw score as survival probability with `1/score` rescale and
    /// no damping. Unstable in practice; kept for study.
    #[serde(default)]
    pub unbiased_magma: bool,
    /// Replace the alignment EMA by a constant scale.
    #[serde(default)]
    pub fixed_scale: Option<f64>,
}

fn default_survival_p() -> f64 {
    0.5
}

fn default_temperature() -> f64 {
    2.0
}

fn default_ema_keep() -> f64 {
    0.9
}

fn default_ema_new() -> f64 {
    0.1
}

fn default_granularity() -> Granularity {
    Granularity::Block
}

fn default_true() -> bool {
    true
}

impl Default for MaskWrapperConfig {
    fn default() -> Self {
        Self::new(MaskMode::None)
    }
}

impl MaskWrapperConfig {
    pub fn new(mode: MaskMode) -> Self {
        Self {
            mode,
            survival_p: default_survival_p(),
            temperature: default_temperature(),
            ema_keep: default_ema_keep(),
            ema_new: default_ema_new(),
            granularity: default_granularity(),
            dense_moments: true,
            align_pre_update: false,
            unbiased_magma: false,
            fixed_scale: None,
        }
    }

    pub fn skip(survival_p: f64) -> Self {
        Self {
            survival_p,
            ..Self::new(MaskMode::Skip)
        }
    }

    pub fn magma(temperature: f64) -> Self {
        Self {
            temperature,
            ..Self::new(MaskMode::Magma)
        }
    }

    pub fn with_granularity(mut self, granularity: Granularity) -> Self {
        self.granularity = granularity;
        self
    }

    pub fn with_dense_moments(mut self, dense: bool) -> Self {
        self.dense_moments = dense;
        self
    }

    pub fn with_fixed_scale(mut self, scale: f64) -> Self {
        self.fixed_scale = Some(scale);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.survival_p > 0.0 && self.survival_p <= 1.0) {
            return Err(Error::config("survival_p must lie in (0, 1]"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config("temperature must be positive"));
        }
        if !(self.ema_keep >= 0.0 && self.ema_new >= 0.0)
            || (self.ema_keep + self.ema_new - 1.0).abs() > 1e-12
        {
            return Err(Error::config(
                "ema_keep and ema_new must be non-negative and sum to 1",
            ));
        }
        if let Some(s) = self.fixed_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config("fixed_scale must be positive"));
            }
        }
        if self.unbiased_magma && self.mode != MaskMode::Magma {
            return Err(Error::config("unbiased_magma requires mode = magma"));
        }
        if self.unbiased_magma && !self.dense_moments {
            return Err(Error::config(
                "unbiased_magma draws masks from the updated momentum and needs dense_moments",
            ));
        }
        if !self.dense_moments && !matches!(self.mode, MaskMode::Skip | MaskMode::Magma) {
            return Err(Error::config(
                "sparse moments are only defined for masking modes (skip, magma)",
            ));
        }
        Ok(())
    }

    /// Modes whose update is multiplied by the alignment EMA.
    pub fn damps(&self) -> bool {
        matches!(self.mode, MaskMode::Magma | MaskMode::DampOnly) && !self.unbiased_magma
    }
}
