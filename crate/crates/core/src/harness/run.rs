//! Deterministic single runs.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ProblemConfig};
use crate::diagnostics::{
    descent_audit_step, expected_masked_loss_quadratic, robust_condition_number,
    transformer_hessian,
};
use crate::error::{Error, Result};
use crate::numeric::{BlockLayout, BlockVector, RngStream};
use crate::optim::{MaskedOptimizer, StepRecord};
use crate::problems::{IclBatch, IclProblem, Objective, QuadraticProblem};

/// Stream ids under the run seed. Runs at the same seed share every stream,
/// so modes differ only through what the wrapper does with its draws.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const BATCH: u64 = 2;
    pub const WRAPPER: u64 = 3;
    pub const EVAL: u64 = 4;
}

/// A run stops as diverged once a loss exceeds this multiple of the initial
/// loss or is not finite.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Survival probability used by the in-run regularizer check when the
/// wrapper itself does not mask.
const PROP1_DEFAULT_P: f64 = 0.5;

/// One traced step. `loss` is the objective at `θ_t`; the remaining fields
/// describe the update taken from `θ_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: u64,
    pub loss: f64,
    pub batch_loss: f64,
    /// Stochastic gradient norm per block.
    pub grad_norm: Vec<f64>,
    /// Per masking unit.
    pub alignment: Vec<f64>,
    pub scale: Vec<f64>,
    pub mask: Vec<bool>,
    /// Per block.
    pub rho: Vec<f64>,
    pub condition_number: Option<f64>,
    pub descent_slack: Option<f64>,
    pub prop1_residual: Option<f64>,
}

/// Trace of one run; the unit and block counts fix the CSV columns even when
/// no record was written.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub num_blocks: usize,
    pub num_units: usize,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new(num_blocks: usize, num_units: usize) -> Self {
        Self {
            num_blocks,
            num_units,
            records: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    /// Objective at the last iterate (at the divergence point for diverged
    /// runs, possibly non-finite).
    pub final_loss: f64,
    pub best_loss: f64,
    /// Mean of the evaluated objective over the last 10% of steps.
    pub tail_mean_loss: f64,
    pub diverged: bool,
    pub diverged_at: Option<u64>,
    pub steps_completed: u64,
    pub wall_time_s: f64,
    pub min_descent_slack: Option<f64>,
    pub median_condition_number: Option<f64>,
    pub max_prop1_residual: Option<f64>,
}

impl RunSummary {
    /// Final loss with diverged runs mapped to `+∞`, for ranking.
    pub fn ranked_loss(&self) -> f64 {
        if self.diverged || !self.final_loss.is_finite() {
            f64::INFINITY
        } else {
            self.final_loss
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub trace: Trace,
}

/// A constructed benchmark objective.
#[derive(Debug, Clone)]
pub enum Problem {
    Quadratic(QuadraticProblem),
    Icl(IclProblem),
}

impl Problem {
    /// Quadratics depend only on their own spec; the ICL evaluation batch is
    /// drawn from the run seed's evaluation stream.
    pub fn build(cfg: &ProblemConfig, seed: u64) -> Result<Self> {
        Ok(match cfg {
            ProblemConfig::Quadratic(spec) => Self::Quadratic(QuadraticProblem::build(spec)?),
            ProblemConfig::Icl(icl) => {
                Self::Icl(IclProblem::new(icl.clone(), &mut RngStream::new(seed, streams::EVAL))?)
            }
        })
    }

    /// Each problem's configured i.i.d. normal init.
    pub fn init_params(&self, rng: &mut RngStream) -> Result<BlockVector> {
        match self {
            Self::Quadratic(q) => q.init_params(rng),
            Self::Icl(p) => p.model().init_params(p.config().init_std, rng),
        }
    }

    /// Leading `size` sequences of the ICL evaluation batch, on which
    /// transformer Hessians are taken. `None` for quadratics.
    pub fn hessian_batch(&self, size: usize) -> Option<IclBatch> {
        match self {
            Self::Icl(p) => {
                let eval = p.eval_batch();
                let keep = size.min(eval.len());
                let (d, n) = (eval.d, eval.n);
                Some(IclBatch {
                    d,
                    n,
                    xs: eval.xs[..keep * (n + 1) * d].to_vec(),
                    ys: eval.ys[..keep * (n + 1)].to_vec(),
                    ws: eval.ws[..keep * d].to_vec(),
                    gammas: eval.gammas.as_ref().map(|g| g[..keep * (n + 1)].to_vec()),
                })
            }
            Self::Quadratic(_) => None,
        }
    }
}

impl Objective for Problem {
    fn layout(&self) -> &Arc<BlockLayout> {
        match self {
            Self::Quadratic(q) => q.layout(),
            Self::Icl(p) => p.layout(),
        }
    }

    fn loss(&self, theta: &BlockVector) -> Result<f64> {
        match self {
            Self::Quadratic(q) => q.loss(theta),
            Self::Icl(p) => p.loss(theta),
        }
    }

    fn gradient(&self, theta: &BlockVector) -> Result<BlockVector> {
        match self {
            Self::Quadratic(q) => q.gradient(theta),
            Self::Icl(p) => p.gradient(theta),
        }
    }

    fn stochastic_gradient(
        &self,
        theta: &BlockVector,
        rng: &mut RngStream,
    ) -> Result<(f64, BlockVector)> {
        match self {
            Self::Quadratic(q) => q.stochastic_gradient(theta, rng),
            Self::Icl(p) => p.stochastic_gradient(theta, rng),
        }
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

fn check_diagnostics(cfg: &ExperimentConfig) -> Result<()> {
    let quad = matches!(cfg.problem, ProblemConfig::Quadratic(_));
    let d = &cfg.diagnostics;
    if (d.descent_audit || d.prop1_verify) && !quad {
        return Err(Error::config(
            "descent_audit and prop1_verify need a quadratic problem",
        ));
    }
    Ok(())
}

/// Run `cfg` from `seed`. The trace and summary are a pure function of
/// `(cfg, seed)` apart from `wall_time_s`.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    cfg.validate()?;
    check_diagnostics(cfg)?;
    let started = Instant::now();
    let problem = Problem::build(&cfg.problem, seed)?;
    let layout = problem.layout().clone();
    let mut theta = problem.init_params(&mut RngStream::new(seed, streams::INIT))?;
    let mut batch_rng = RngStream::new(seed, streams::BATCH);
    let mut opt = MaskedOptimizer::new(
        layout.clone(),
        cfg.optimizer.clone(),
        cfg.wrapper.clone(),
        RngStream::new(seed, streams::WRAPPER),
    )?;
    let mut trace = Trace::new(layout.num_blocks(), opt.units().len());
    let hessian_batch = problem.hessian_batch(cfg.diagnostics.hessian_batch);

    let steps = cfg.steps as u64;
    let tail_start = steps - steps.div_ceil(10);
    let initial = problem.loss(&theta)?;
    let limit = DIVERGENCE_FACTOR * initial.max(f64::MIN_POSITIVE);
    let mut evaluated: Vec<(u64, f64)> = Vec::new();
    let mut conds = Vec::new();
    let mut min_slack: Option<f64> = None;
    let mut max_prop1: Option<f64> = None;
    let mut diverged_at = None;

    let mut t = 0u64;
    while t < steps {
        let traced = t % cfg.trace_stride as u64 == 0;
        let loss = if traced { Some(problem.loss(&theta)?) } else { None };
        if let Some(l) = loss {
            evaluated.push((t, l));
            if !(l.is_finite() && l <= limit) {
                diverged_at = Some(t);
                break;
            }
        }
        let diag_now = t % cfg.diagnostics.condition_stride as u64 == 0;
        let condition_number = match (&problem, cfg.diagnostics.condition_number && diag_now) {
            (_, false) => None,
            (Problem::Quadratic(q), true) => Some(robust_condition_number(q.hessian())?),
            (Problem::Icl(p), true) => {
                let batch = hessian_batch.as_ref().expect("icl hessian batch");
                let h = transformer_hessian(p.model(), &theta, batch)?;
                Some(robust_condition_number(&h)?)
            }
        };
        if let Some(c) = condition_number {
            conds.push(c);
        }
        let descent_slack = match &problem {
            Problem::Quadratic(q) if cfg.diagnostics.descent_audit && traced => {
                let audit = descent_audit_step(q, &theta, &opt)?;
                min_slack = Some(min_slack.map_or(audit.slack, |m: f64| m.min(audit.slack)));
                Some(audit.slack)
            }
            _ => None,
        };
        let prop1_residual = match &problem {
            Problem::Quadratic(q) if cfg.diagnostics.prop1_verify && diag_now => {
                let mut delta = q.grad_at(&theta)?;
                delta.scale(cfg.optimizer.learning_rate);
                let p = match opt.survival_p() {
                    p if p < 1.0 => p,
                    _ => PROP1_DEFAULT_P,
                };
                let r = expected_masked_loss_quadratic(q, &theta, &delta, p)?;
                let rel = r.discrepancy() / (1.0 + r.baseline_loss.abs());
                max_prop1 = Some(max_prop1.map_or(rel, |m: f64| m.max(rel)));
                Some(rel)
            }
            _ => None,
        };

        let (batch_loss, g) = match problem.stochastic_gradient(&theta, &mut batch_rng) {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => {
                diverged_at = Some(t);
                break;
            }
            Err(e) => return Err(e),
        };
        if !(batch_loss.is_finite() && batch_loss <= limit) || g.as_slice().iter().any(|x| !x.is_finite()) {
            diverged_at = Some(t);
            break;
        }
        let rec: StepRecord = opt.step(&mut theta, &g)?;
        if traced {
            trace.records.push(TraceRecord {
                step: t,
                loss: loss.expect("traced step has a loss"),
                batch_loss,
                grad_norm: g.block_norms(),
                alignment: if cfg.diagnostics.alignment_trace {
                    rec.alignment
                } else {
                    vec![f64::NAN; trace.num_units]
                },
                scale: rec.scale,
                mask: rec.mask,
                rho: rec.rho,
                condition_number,
                descent_slack,
                prop1_residual,
            });
        }
        t += 1;
    }

    let final_loss = match diverged_at {
        Some(_) => evaluated
            .last()
            .filter(|(s, _)| Some(*s) == diverged_at)
            .map(|(_, l)| *l)
            .unwrap_or(f64::INFINITY),
        None => {
            let l = problem.loss(&theta)?;
            evaluated.push((steps, l));
            l
        }
    };
    let diverged = diverged_at.is_some() || !final_loss.is_finite() || final_loss > limit;
    let finite: Vec<f64> = evaluated.iter().map(|e| e.1).filter(|l| l.is_finite()).collect();
    let best_loss = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let tail: Vec<f64> = evaluated
        .iter()
        .filter(|(s, _)| *s >= tail_start)
        .map(|e| e.1)
        .collect();
    let tail_mean_loss = if tail.is_empty() {
        f64::NAN
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    };
    Ok(RunOutput {
        summary: RunSummary {
            seed,
            final_loss,
            best_loss,
            tail_mean_loss,
            diverged,
            diverged_at: if diverged { Some(diverged_at.unwrap_or(steps)) } else { None },
            steps_completed: t,
            wall_time_s: started.elapsed().as_secs_f64(),
            min_descent_slack: min_slack,
            median_condition_number: median(&mut conds),
            max_prop1_residual: max_prop1,
        },
        trace,
    })
}
