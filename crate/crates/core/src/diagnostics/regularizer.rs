//! Expected loss under scaled random masking, its curvature regularizer, and
//! the cubic remainder.

use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::numeric::{BlockVector, RngStream, SymmetricMatrix};
use crate::optim::{draw_masks, skip_update, MaskUnits};
use crate::problems::{Objective, QuadraticProblem};

/// Largest number of masking units enumerated exhaustively.
pub const MAX_ENUMERATED_UNITS: usize = 20;

/// Smallest Monte Carlo sample count accepted.
pub const MIN_MC_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularizerReport {
    /// `E[l(θ - Δ̃)]` by enumeration of every mask outcome.
    pub exact_expected_loss: f64,
    /// `l(θ - Δ)`
    pub baseline_loss: f64,
    /// `Σ_u (1-p)/(2p) Δ_uᵀ H_uu Δ_u`
    pub regularizer: f64,
    pub mc_estimate: Option<f64>,
    pub mc_stderr: Option<f64>,
}

impl RegularizerReport {
    /// `baseline_loss + regularizer`
    pub fn formula(&self) -> f64 {
        self.baseline_loss + self.regularizer
    }

    /// `|exact - formula|`
    pub fn discrepancy(&self) -> f64 {
        (self.exact_expected_loss - self.formula()).abs()
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Diagnostic(format!("survival probability {p} outside (0, 1]")));
    }
    Ok(())
}

/// `θ - skip_update(Δ)` for one mask outcome.
fn masked_point(
    theta: &BlockVector,
    delta: &BlockVector,
    units: &MaskUnits,
    masks: &[bool],
    p: f64,
) -> Result<BlockVector> {
    let mut out = theta.clone();
    out.axpy(-1.0, &skip_update(delta, units, masks, p)?)?;
    Ok(out)
}

/// Calls `visit(mask, probability)` for all `2^U` outcomes of i.i.d.
/// Bernoulli(`p`) unit masks.
pub fn for_each_mask_outcome<F>(units: usize, p: f64, mut visit: F) -> Result<()>
where
    F: FnMut(&[bool], f64) -> Result<()>,
{
    check_p(p)?;
    if units > MAX_ENUMERATED_UNITS {
        return Err(Error::Diagnostic(format!(
            "{units} masking units exceed the enumeration limit of {MAX_ENUMERATED_UNITS}; use Monte Carlo"
        )));
    }
    let mut mask = vec![false; units];
    for bits in 0u64..(1u64 << units) {
        let mut prob = 1.0;
        for (u, m) in mask.iter_mut().enumerate() {
            *m = bits >> u & 1 == 1;
            prob *= if *m { p } else { 1.0 - p };
        }
        if prob > 0.0 {
            visit(&mask, prob)?;
        }
    }
    Ok(())
}

/// Exact `E[skip_update(Δ)]` over every mask outcome.
///
/// Uses compensated summation so the result stays within a few ulps of `Δ`
/// even for `2^20` outcomes.
pub fn enumerate_skip_expectation(delta: &BlockVector, units: &MaskUnits, p: f64) -> Result<BlockVector> {
    let mut sum = vec![0.0; delta.len()];
    let mut comp = vec![0.0; delta.len()];
    for_each_mask_outcome(units.len(), p, |mask, prob| {
        let term = skip_update(delta, units, mask, p)?;
        for (i, &t) in term.as_slice().iter().enumerate() {
            neumaier_add(&mut sum[i], &mut comp[i], prob * t);
        }
        Ok(())
    })?;
    let data = sum.iter().zip(&comp).map(|(s, c)| s + c).collect();
    BlockVector::new(data, delta.layout().clone())
}

fn neumaier_add(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

/// Exact `E[l(θ - Δ̃)]` by enumeration of every mask outcome.
pub fn enumerate_masked_loss<L>(
    loss: L,
    theta: &BlockVector,
    delta: &BlockVector,
    units: &MaskUnits,
    p: f64,
) -> Result<f64>
where
    L: Fn(&BlockVector) -> Result<f64>,
{
    theta.ensure_same_layout(delta)?;
    let mut acc = 0.0;
    for_each_mask_outcome(units.len(), p, |mask, prob| {
        acc += prob * loss(&masked_point(theta, delta, units, mask, p)?)?;
        Ok(())
    })?;
    Ok(acc)
}

/// `Σ_u (1-p)/(2p) Δ_uᵀ H_uu Δ_u` where `H_uu` is the principal submatrix on
/// the members of unit `u`. Element units give the diagonal-entry form.
pub fn masking_regularizer(
    hessian: &SymmetricMatrix,
    delta: &BlockVector,
    units: &MaskUnits,
    p: f64,
) -> Result<f64> {
    check_p(p)?;
    check_len(hessian.dim(), delta.len())?;
    let coef = (1.0 - p) / (2.0 * p);
    let mut total = 0.0;
    for u in 0..units.len() {
        let idx = units.members(u);
        let mut q = 0.0;
        for &i in idx {
            for &j in idx {
                q += delta[i] * hessian.get(i, j) * delta[j];
            }
        }
        total += q;
    }
    Ok(coef * total)
}

/// Exact expected loss of block-masked SkipUpdate on a quadratic, next to the
/// closed-form regularizer (the remainder vanishes identically here).
pub fn expected_masked_loss_quadratic(
    problem: &QuadraticProblem,
    theta: &BlockVector,
    delta: &BlockVector,
    p: f64,
) -> Result<RegularizerReport> {
    let units = MaskUnits::new(problem.layout(), crate::optim::Granularity::Block);
    let exact = enumerate_masked_loss(|w| problem.loss_at(w), theta, delta, &units, p)?;
    let mut base = theta.clone();
    base.axpy(-1.0, delta)?;
    Ok(RegularizerReport {
        exact_expected_loss: exact,
        baseline_loss: problem.loss_at(&base)?,
        regularizer: masking_regularizer(problem.hessian(), delta, &units, p)?,
        mc_estimate: None,
        mc_stderr: None,
    })
}

/// Sample mean and standard error of `l(θ - Δ̃)` over `samples` independent
/// mask draws.
pub fn monte_carlo_masked_loss<L>(
    loss: L,
    theta: &BlockVector,
    delta: &BlockVector,
    units: &MaskUnits,
    p: f64,
    samples: usize,
    rng: &mut RngStream,
) -> Result<McEstimate>
where
    L: Fn(&BlockVector) -> Result<f64>,
{
    check_p(p)?;
    theta.ensure_same_layout(delta)?;
    if samples < MIN_MC_SAMPLES {
        return Err(Error::Diagnostic(format!(
            "Monte Carlo needs at least {MIN_MC_SAMPLES} samples, got {samples}"
        )));
    }
    // Welford accumulation
    let (mut mean, mut m2) = (0.0, 0.0);
    for k in 0..samples {
        let masks = draw_masks(units.len(), p, rng);
        let v = loss(&masked_point(theta, delta, units, &masks, p)?)?;
        if !v.is_finite() {
            return Err(Error::non_finite("Monte Carlo loss sample"));
        }
        let d = v - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (v - mean);
    }
    let var = m2 / (samples - 1) as f64;
    Ok(McEstimate {
        mean,
        stderr: (var / samples as f64).sqrt(),
        samples,
    })
}

/// How the masked expectation is evaluated in the remainder check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Expectation {
    Enumerate,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RemainderPoint {
    pub scale: f64,
    /// `|E[l(θ - cΔ̃)] - l(θ - cΔ) - c²·R|`
    pub residual: f64,
    /// Zero under enumeration.
    pub stderr: f64,
}

/// Remainder of the second-order expansion at each step scale `c`.
///
/// `hessian` must be the Hessian of `loss` at `theta`.
#[allow(clippy::too_many_arguments)]
pub fn remainder_residuals<L>(
    loss: L,
    hessian: &SymmetricMatrix,
    theta: &BlockVector,
    delta: &BlockVector,
    units: &MaskUnits,
    p: f64,
    scales: &[f64],
    expectation: Expectation,
) -> Result<Vec<RemainderPoint>>
where
    L: Fn(&BlockVector) -> Result<f64>,
{
    let reg = masking_regularizer(hessian, delta, units, p)?;
    scales
        .iter()
        .map(|&c| {
            let mut d = delta.clone();
            d.scale(c);
            let mut base = theta.clone();
            base.axpy(-1.0, &d)?;
            let predicted = loss(&base)? + c * c * reg;
            let (expected, stderr) = match expectation {
                Expectation::Enumerate => (enumerate_masked_loss(&loss, theta, &d, units, p)?, 0.0),
                Expectation::MonteCarlo { samples, seed } => {
                    // common random numbers across scales
                    let mut rng = RngStream::new(seed, 0x4d43);
                    let est = monte_carlo_masked_loss(&loss, theta, &d, units, p, samples, &mut rng)?;
                    (est.mean, est.stderr)
                }
            };
            Ok(RemainderPoint {
                scale: c,
                residual: (expected - predicted).abs(),
                stderr,
            })
        })
        .collect()
}

/// Least-squares slope of `log residual` against `log c`.
///
/// Errors when fewer than two scales are given, or when any residual is not
/// clearly above its Monte Carlo noise (4 standard errors).
pub fn fit_remainder_exponent(points: &[RemainderPoint]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Diagnostic(
            "at least two step scales are needed to fit an exponent".into(),
        ));
    }
    for pt in points {
        if !(pt.residual > 4.0 * pt.stderr) || pt.residual <= 0.0 {
            return Err(Error::Diagnostic(format!(
                "remainder {:.3e} at scale {} is not resolved above Monte Carlo noise \
                 (stderr {:.3e}); increase the sample count",
                pt.residual, pt.scale, pt.stderr
            )));
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.scale.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.residual.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Diagnostic("step scales must be distinct".into()));
    }
    Ok(sxy / sxx)
}

/// `l(w) = ½ wᵀHw + α Σ w_i³`, a smooth non-quadratic test loss whose
/// masking remainder is exactly cubic in the step size.
#[derive(Debug, Clone)]
pub struct CubicPerturbed<'a> {
    pub problem: &'a QuadraticProblem,
    pub alpha: f64,
}

impl CubicPerturbed<'_> {
    pub fn loss(&self, w: &BlockVector) -> Result<f64> {
        let cubic: f64 = w.as_slice().iter().map(|x| x * x * x).sum();
        Ok(self.problem.loss_at(w)? + self.alpha * cubic)
    }

    /// `H + 6α diag(w)`
    pub fn hessian_at(&self, w: &BlockVector) -> Result<SymmetricMatrix> {
        check_len(self.problem.dim(), w.len())?;
        let h = self.problem.hessian().matrix();
        let n = w.len();
        let mut data = h.as_slice().to_vec();
        for i in 0..n {
            data[i * n + i] += 6.0 * self.alpha * w[i];
        }
        SymmetricMatrix::new(crate::numeric::Matrix::from_row_major(n, n, data)?)
    }
}
