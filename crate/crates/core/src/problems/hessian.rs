//! Finite-difference Hessians of small objectives.

use crate::error::{Error, Result};
use crate::numeric::{BlockVector, SymmetricMatrix};

/// Largest parameter count accepted; beyond this an FD Hessian is both slow
/// and not what the diagnostics are meant for.
pub const MAX_FD_PARAMS: usize = 1000;

#[derive(Debug, Clone)]
pub struct FdHessian {
    /// `(H + Hᵀ)/2`
    pub hessian: SymmetricMatrix,
    /// `max |H_ij - H_ji|` before symmetrization, relative to `max |H_ij|`.
    pub asymmetry: f64,
}

/// Central differences of `grad` with step `h`: column `j` is
/// `(∇f(θ + h e_j) - ∇f(θ - h e_j)) / 2h`.
pub fn fd_hessian<F>(theta: &BlockVector, h: f64, mut grad: F) -> Result<FdHessian>
where
    F: FnMut(&BlockVector) -> Result<BlockVector>,
{
    let n = theta.len();
    if n > MAX_FD_PARAMS {
        return Err(Error::Diagnostic(format!(
            "finite-difference Hessian limited to {MAX_FD_PARAMS} parameters, got {n}"
        )));
    }
    if !(h > 0.0) {
        return Err(Error::config("finite-difference step must be positive"));
    }
    let mut raw = vec![0.0; n * n];
    let mut probe = theta.clone();
    for j in 0..n {
        let x = probe[j];
        probe[j] = x + h;
        let gp = grad(&probe)?;
        probe[j] = x - h;
        let gm = grad(&probe)?;
        probe[j] = x;
        for i in 0..n {
            raw[i * n + j] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("finite-difference Hessian"));
    }
    let scale = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((raw[i * n + j] - raw[j * n + i]).abs());
        }
    }
    let m = crate::numeric::Matrix::from_row_major(n, n, raw)?;
    Ok(FdHessian {
        hessian: SymmetricMatrix::symmetrized(&m)?,
        asymmetry: if scale > 0.0 { asym / scale } else { 0.0 },
    })
}
