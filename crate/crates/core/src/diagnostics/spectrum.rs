//! Hessian conditioning along a trajectory.

use crate::error::{Error, Result};
use crate::numeric::{symmetric_eigen, BlockVector, SymmetricMatrix};
use crate::problems::{fd_hessian, IclBatch, LinearTransformer};

/// Eigenvalues below this fraction of `λ_max` are floored to it.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// Step of the central differences used for transformer Hessians.
pub const FD_STEP: f64 = 1e-4;

/// `λ_max / median(λ)` with eigenvalues floored at `1e-10·λ_max`.
pub fn robust_condition_number(h: &SymmetricMatrix) -> Result<f64> {
    let eig = symmetric_eigen(h)?;
    robust_condition_from_eigenvalues(&eig.values)
}

/// Same statistic from an ascending or unsorted eigenvalue list.
pub fn robust_condition_from_eigenvalues(values: &[f64]) -> Result<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let max = *v
        .last()
        .ok_or_else(|| Error::Diagnostic("empty spectrum".into()))?;
    if !(max > 0.0) {
        return Err(Error::Diagnostic(format!(
            "largest eigenvalue {max} is not positive"
        )));
    }
    let floor = EIGEN_FLOOR * max;
    v.iter_mut().for_each(|x| *x = x.max(floor));
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    Ok(max / median)
}

/// Finite-difference Hessian of the transformer loss on a fixed batch.
pub fn transformer_hessian(
    model: &LinearTransformer,
    params: &BlockVector,
    batch: &IclBatch,
) -> Result<SymmetricMatrix> {
    Ok(fd_hessian(params, FD_STEP, |p| Ok(model.loss_grad(p, batch)?.1))?.hessian)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{Matrix, RngStream};
    use crate::problems::{sample_icl_batch, IclConfig, Tail, BENCHMARK_SPECTRUM};

    #[test]
    fn benchmark_spectrum_ratio() {
        let h = SymmetricMatrix::from_diagonal(&BENCHMARK_SPECTRUM);
        assert!((robust_condition_number(&h).unwrap() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn small_cases() {
        assert!((robust_condition_number(&SymmetricMatrix::identity(5)).unwrap() - 1.0).abs() < 1e-12);
        let h = SymmetricMatrix::from_diagonal(&[1.0, 1.0, 1.0, 10.0]);
        assert!((robust_condition_number(&h).unwrap() - 10.0).abs() < 1e-12);
        let neg = SymmetricMatrix::from_diagonal(&[-1.0, -2.0]);
        assert!(robust_condition_number(&neg).is_err());
    }

    #[test]
    fn floor_keeps_ratio_finite() {
        let r = robust_condition_from_eigenvalues(&[0.0, -3.0, 0.0, 4.0]).unwrap();
        assert!(r.is_finite());
        assert!((r - 1e10).abs() < 1.0);
    }

    #[test]
    fn transformer_hessian_is_deterministic() {
        let cfg = IclConfig {
            d: 2,
            n: 4,
            layers: 1,
            ..IclConfig::new(Tail::Light)
        };
        let model = LinearTransformer::from_config(&cfg).unwrap();
        let params = model.init_params(0.3, &mut RngStream::new(1, 0)).unwrap();
        let batch = sample_icl_batch(&cfg, 1, &mut RngStream::new(2, 0)).unwrap().repeat(0, 3);
        let a = transformer_hessian(&model, &params, &batch).unwrap();
        let b = transformer_hessian(&model, &params, &batch).unwrap();
        assert_eq!(a, b);
        let m: &Matrix = a.matrix();
        assert_eq!(m.rows(), 18);
    }

    mod props {
        use proptest::prelude::*;

        use super::*;

        proptest! {
            #[test]
            fn scale_invariant(vals in proptest::collection::vec(0.01f64..1e3, 2..12), c in 1e-3f64..1e3) {
                let a = robust_condition_from_eigenvalues(&vals).unwrap();
                let scaled: Vec<f64> = vals.iter().map(|v| v * c).collect();
                let b = robust_condition_from_eigenvalues(&scaled).unwrap();
                prop_assert!((a - b).abs() <= 1e-10 * a);
            }
        }
    }
}
