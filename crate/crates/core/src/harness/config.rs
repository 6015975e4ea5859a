//! JSON experiment configuration and sweep grids.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{BaseOptimizerConfig, MaskMode, MaskWrapperConfig};
use crate::problems::{Arrangement, IclConfig, QuadraticSpec, Tail};

/// Environment variable naming the default output directory of the CLI.
pub const OUT_DIR_ENV: &str = "MAGMA_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    Quadratic(QuadraticSpec),
    Icl(IclConfig),
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Quadratic(q) => q.validate(),
            Self::Icl(c) => c.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Check the expected-loss regularizer at every condition-stride step
    /// (quadratics only).
    #[serde(default)]
    pub prop1_verify: bool,
    /// Descent audit on every traced step (quadratics with SGD only).
    #[serde(default)]
    pub descent_audit: bool,
    #[serde(default)]
    pub condition_number: bool,
    #[serde(default = "default_true")]
    pub alignment_trace: bool,
    /// Steps between condition-number evaluations.
    #[serde(default = "default_condition_stride")]
    pub condition_stride: usize,
    /// Sequences of the evaluation batch used for transformer Hessians.
    #[serde(default = "default_hessian_batch")]
    pub hessian_batch: usize,
}

fn default_true() -> bool {
    true
}

fn default_condition_stride() -> usize {
    50
}

fn default_hessian_batch() -> usize {
    64
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            prop1_verify: false,
            descent_audit: false,
            condition_number: false,
            alignment_trace: true,
            condition_stride: default_condition_stride(),
            hessian_batch: default_hessian_batch(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub optimizer: BaseOptimizerConfig,
    #[serde(default = "default_wrapper")]
    pub wrapper: MaskWrapperConfig,
    pub steps: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_trace_stride")]
    pub trace_stride: usize,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

fn default_wrapper() -> MaskWrapperConfig {
    MaskWrapperConfig::new(MaskMode::None)
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_trace_stride() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(problem: ProblemConfig, optimizer: BaseOptimizerConfig, steps: usize) -> Self {
        Self {
            problem,
            optimizer,
            wrapper: default_wrapper(),
            steps,
            seeds: default_seeds(),
            trace_stride: default_trace_stride(),
            diagnostics: DiagnosticsConfig::default(),
        }
    }

    pub fn with_wrapper(mut self, wrapper: MaskWrapperConfig) -> Self {
        self.wrapper = wrapper;
        self
    }

    pub fn with_seeds(mut self, seeds: impl IntoIterator<Item = u64>) -> Self {
        self.seeds = seeds.into_iter().collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("steps must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if self.trace_stride == 0 || self.diagnostics.condition_stride == 0 {
            return Err(Error::config("strides must be at least 1"));
        }
        if self.diagnostics.hessian_batch == 0 {
            return Err(Error::config("hessian_batch must be at least 1"));
        }
        self.problem.validate()?;
        self.optimizer.validate()?;
        self.wrapper.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

/// Values swept over; an absent or empty list keeps the template's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default)]
    pub learning_rate: Vec<f64>,
    #[serde(default)]
    pub survival_p: Vec<f64>,
    #[serde(default)]
    pub temperature: Vec<f64>,
    #[serde(default)]
    pub mode: Vec<MaskMode>,
    #[serde(default)]
    pub tail: Vec<Tail>,
    #[serde(default)]
    pub arrangement: Vec<Arrangement>,
    #[serde(default)]
    pub dense_moments: Vec<bool>,
    /// Overrides the template's seed list when present.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
}

impl SweepGrid {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// One configuration per grid cell, in row-major order with the axes
    /// ordered as the struct fields.
    pub fn expand(&self, template: &ExperimentConfig) -> Result<Vec<ExperimentConfig>> {
        fn axis<T: Clone>(values: &[T]) -> Vec<Option<T>> {
            if values.is_empty() {
                vec![None]
            } else {
                values.iter().cloned().map(Some).collect()
            }
        }
        let mut out = Vec::new();
        for lr in axis(&self.learning_rate) {
            for p in axis(&self.survival_p) {
                for tau in axis(&self.temperature) {
                    for mode in axis(&self.mode) {
                        for tail in axis(&self.tail) {
                            for arr in axis(&self.arrangement) {
                                for dense in axis(&self.dense_moments) {
                                    let mut c = template.clone();
                                    if let Some(lr) = lr {
                                        c.optimizer.learning_rate = lr;
                                    }
                                    if let Some(p) = p {
                                        c.wrapper.survival_p = p;
                                    }
                                    if let Some(t) = tau {
                                        c.wrapper.temperature = t;
                                    }
                                    if let Some(m) = mode {
                                        c.wrapper.mode = m;
                                    }
                                    if let Some(d) = dense {
                                        c.wrapper.dense_moments = d;
                                    }
                                    match (&mut c.problem, tail, arr) {
                                        (ProblemConfig::Icl(icl), Some(t), _) => icl.tail = t,
                                        (ProblemConfig::Quadratic(q), _, Some(a)) => q.arrangement = a,
                                        (ProblemConfig::Quadratic(_), Some(_), _) => {
                                            return Err(Error::config("tail axis needs an icl problem"))
                                        }
                                        (ProblemConfig::Icl(_), _, Some(_)) => {
                                            return Err(Error::config(
                                                "arrangement axis needs a quadratic problem",
                                            ))
                                        }
                                        _ => {}
                                    }
                                    if let Some(seeds) = &self.seeds {
                                        c.seeds = seeds.clone();
                                    }
                                    out.push(c);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "problem": {"quadratic": {"arrangement": "heterogeneous"}},
        "optimizer": {"kind": "adamw", "learning_rate": 0.01},
        "steps": 10
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.seeds, (0..10).collect::<Vec<_>>());
        assert_eq!(c.wrapper.mode, MaskMode::None);
        assert_eq!(c.trace_stride, 1);
        assert_eq!(c.diagnostics.condition_stride, 50);
        match c.problem {
            ProblemConfig::Quadratic(q) => assert_eq!(q.block_size, 3),
            _ => panic!("wrong problem"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let typo = MINIMAL.replace("\"steps\"", "\"stepz\"");
        assert!(matches!(ExperimentConfig::from_json(&typo), Err(Error::Config(_))));
        let nested = MINIMAL.replace("\"arrangement\"", "\"arangement\"");
        assert!(ExperimentConfig::from_json(&nested).is_err());
        let grid = r#"{"learning_rates": [0.1]}"#;
        assert!(SweepGrid::from_json(grid).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let zero = MINIMAL.replace("\"steps\": 10", "\"steps\": 0");
        assert!(ExperimentConfig::from_json(&zero).is_err());
        let lr = MINIMAL.replace("0.01", "-1.0");
        assert!(ExperimentConfig::from_json(&lr).is_err());
    }

    #[test]
    fn grid_expansion_order_and_size() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        let g = SweepGrid {
            survival_p: vec![0.25, 0.5, 0.75],
            temperature: vec![0.5, 1.0, 2.0, 4.0],
            ..Default::default()
        };
        let cells = g.expand(&c).unwrap();
        assert_eq!(cells.len(), 12);
        assert_eq!(cells[1].wrapper.temperature, 1.0);
        assert_eq!(cells[4].wrapper.survival_p, 0.5);
        assert_eq!(SweepGrid::default().expand(&c).unwrap(), vec![c.clone()]);
        let bad = SweepGrid {
            tail: vec![Tail::Heavy],
            ..Default::default()
        };
        assert!(bad.expand(&c).is_err());
    }
}
