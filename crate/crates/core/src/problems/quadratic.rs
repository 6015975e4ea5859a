//! Block-diagonal quadratics `l(w) = ½ wᵀHw` with row-subsampled
//! stochastic gradients.
//!
//! `H` is assembled block by block: each block is a diagonal matrix of
//! eigenvalues conjugated by an independent Haar rotation. Stochastic
//! gradients come from the design matrix `X = H^{1/2}` (so `XᵀX = H`): a
//! uniformly drawn subset `S` of its rows gives `(d/|S|) Σ_{i∈S} x_i x_iᵀ w`,
//! an unbiased estimate of `Hw`.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Objective;
use crate::error::{check_len, Error, Result};
use crate::numeric::{
    dot, haar_orthogonal, matrix_sqrt, symmetric_eigen, BlockLayout, BlockVector, Matrix,
    RngStream, SymmetricMatrix,
};

/// Eigenvalues shared by both benchmark quadratics.
pub const BENCHMARK_SPECTRUM: [f64; 9] = [1.0, 2.0, 3.0, 99.0, 100.0, 101.0, 4998.0, 4999.0, 5000.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrangement {
    /// Eigenvalues of similar scale share a block.
    Homogeneous,
    /// Every block mixes small, medium and large eigenvalues.
    Heterogeneous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    #[serde(default = "default_spectrum")]
    pub spectrum: Vec<f64>,
    pub arrangement: Arrangement,
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    /// Seed of the block rotations.
    #[serde(default)]
    pub seed: u64,
    /// Rows of `X` per stochastic gradient.
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Standard deviation of the i.i.d. normal initial point.
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

fn default_spectrum() -> Vec<f64> {
    BENCHMARK_SPECTRUM.to_vec()
}

fn default_block_size() -> usize {
    3
}

fn default_batch_size() -> usize {
    3
}

fn default_init_std() -> f64 {
    1.0
}

impl QuadraticSpec {
    pub fn benchmark(arrangement: Arrangement, seed: u64) -> Self {
        Self {
            spectrum: default_spectrum(),
            arrangement,
            block_size: default_block_size(),
            seed,
            batch_size: default_batch_size(),
            init_std: default_init_std(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 || self.spectrum.is_empty() || self.spectrum.len() % self.block_size != 0 {
            return Err(Error::config(
                "spectrum length must be a positive multiple of block_size",
            ));
        }
        if self.spectrum.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::config("all eigenvalues must be positive"));
        }
        if self.batch_size == 0 || self.batch_size > self.spectrum.len() {
            return Err(Error::config("batch_size must lie in [1, d]"));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::config("init_std must be non-negative"));
        }
        Ok(())
    }

    /// Eigenvalues assigned to each block under the chosen arrangement.
    pub fn block_eigenvalues(&self) -> Vec<Vec<f64>> {
        let mut sorted = self.spectrum.clone();
        sorted.sort_by(f64::total_cmp);
        let k = self.block_size;
        let blocks = sorted.len() / k;
        (0..blocks)
            .map(|b| match self.arrangement {
                Arrangement::Homogeneous => sorted[b * k..(b + 1) * k].to_vec(),
                Arrangement::Heterogeneous => (0..k).map(|j| sorted[b + j * blocks]).collect(),
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    h: SymmetricMatrix,
    x: SymmetricMatrix,
    layout: Arc<BlockLayout>,
    batch_size: usize,
    init_std: f64,
}

/// Stream id of the block rotations under `QuadraticSpec::seed`.
const ROTATION_STREAM: u64 = 0x51;

impl QuadraticProblem {
    pub fn build(spec: &QuadraticSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = RngStream::new(spec.seed, ROTATION_STREAM);
        let k = spec.block_size;
        let d = spec.spectrum.len();
        let mut h = Matrix::zeros(d, d);
        for (b, eigs) in spec.block_eigenvalues().iter().enumerate() {
            let q = haar_orthogonal(k, &mut rng);
            let block = SymmetricMatrix::from_diagonal(eigs).conjugate(&q)?;
            for i in 0..k {
                for j in 0..k {
                    h[(b * k + i, b * k + j)] = block.get(i, j);
                }
            }
        }
        let layout = Arc::new(BlockLayout::uniform(d / k, k)?);
        let mut q = Self::from_hessian(SymmetricMatrix::symmetrized(&h)?, layout, spec.batch_size)?;
        q.init_std = spec.init_std;
        Ok(q)
    }

    /// Quadratic with an explicit Hessian. `H` must be PSD.
    pub fn from_hessian(
        h: SymmetricMatrix,
        layout: Arc<BlockLayout>,
        batch_size: usize,
    ) -> Result<Self> {
        check_len(layout.dim(), h.dim())?;
        if batch_size == 0 || batch_size > h.dim() {
            return Err(Error::config("batch_size must lie in [1, d]"));
        }
        let x = matrix_sqrt(&h)?;
        Ok(Self {
            h,
            x,
            layout,
            batch_size,
            init_std: 1.0,
        })
    }

    /// Initial point with i.i.d. `N(0, init_std²)` entries (`init_std` is 1
    /// unless the spec sets it).
    pub fn init_params(&self, rng: &mut RngStream) -> Result<BlockVector> {
        let data = (0..self.dim())
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                self.init_std * z
            })
            .collect();
        BlockVector::new(data, self.layout.clone())
    }

    pub fn hessian(&self) -> &SymmetricMatrix {
        &self.h
    }

    pub fn design(&self) -> &SymmetricMatrix {
        &self.x
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Diagonal block `H_bb`.
    pub fn block_hessian(&self, b: usize) -> Result<SymmetricMatrix> {
        Ok(self.h.submatrix(self.layout.range(b)?))
    }

    /// Block smoothness constants `L_b = λ_max(H_bb)`.
    pub fn block_smoothness(&self) -> Result<Vec<f64>> {
        (0..self.layout.num_blocks())
            .map(|b| {
                let eig = symmetric_eigen(&self.block_hessian(b)?)?;
                Ok(*eig.values.last().unwrap())
            })
            .collect()
    }

    /// Largest absolute entry of `H` outside the diagonal blocks.
    pub fn off_block_max(&self) -> f64 {
        let mut block_of = vec![0; self.dim()];
        for b in 0..self.layout.num_blocks() {
            for i in self.layout.range(b).unwrap() {
                block_of[i] = b;
            }
        }
        let mut worst = 0.0f64;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                if block_of[i] != block_of[j] {
                    worst = worst.max(self.h.get(i, j).abs());
                }
            }
        }
        worst
    }

    pub fn loss_at(&self, w: &BlockVector) -> Result<f64> {
        check_len(self.dim(), w.len())?;
        Ok(0.5 * self.h.quadratic_form(w.as_slice())?)
    }

    pub fn grad_at(&self, w: &BlockVector) -> Result<BlockVector> {
        check_len(self.dim(), w.len())?;
        BlockVector::new(self.h.matrix().matvec(w.as_slice())?, self.layout.clone())
    }

    /// `(d/|S|) Σ_{i∈S} x_i (x_iᵀ w)` together with the matching minibatch
    /// loss `(d/|S|) Σ ½ (x_iᵀ w)²`.
    pub fn grad_for_rows(&self, w: &BlockVector, rows: &[usize]) -> Result<(f64, BlockVector)> {
        check_len(self.dim(), w.len())?;
        let scale = self.dim() as f64 / rows.len() as f64;
        let mut g = BlockVector::zeros(self.layout.clone());
        let mut loss = 0.0;
        for &r in rows {
            let xr = self.x.matrix().row(r);
            let proj = dot(xr, w.as_slice());
            loss += 0.5 * proj * proj;
            for (gi, &xi) in g.as_mut_slice().iter_mut().zip(xr) {
                *gi += scale * proj * xi;
            }
        }
        Ok((scale * loss, g))
    }

    pub fn sample_rows(&self, rng: &mut RngStream) -> Vec<usize> {
        let mut rows = rand::seq::index::sample(rng, self.dim(), self.batch_size).into_vec();
        rows.sort_unstable();
        rows
    }

    pub fn stoch_grad(&self, w: &BlockVector, rng: &mut RngStream) -> Result<BlockVector> {
        let rows = self.sample_rows(rng);
        Ok(self.grad_for_rows(w, &rows)?.1)
    }
}

impl Objective for QuadraticProblem {
    fn layout(&self) -> &Arc<BlockLayout> {
        &self.layout
    }

    fn loss(&self, theta: &BlockVector) -> Result<f64> {
        self.loss_at(theta)
    }

    fn gradient(&self, theta: &BlockVector) -> Result<BlockVector> {
        self.grad_at(theta)
    }

    fn stochastic_gradient(
        &self,
        theta: &BlockVector,
        rng: &mut RngStream,
    ) -> Result<(f64, BlockVector)> {
        let rows = self.sample_rows(rng);
        self.grad_for_rows(theta, &rows)
    }
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn all_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use rand_distr::{Distribution, StandardNormal};

    use super::*;

    fn random_point(p: &QuadraticProblem, rng: &mut RngStream) -> BlockVector {
        let data = (0..p.dim()).map(|_| StandardNormal.sample(rng)).collect();
        BlockVector::new(data, p.layout().clone()).unwrap()
    }

    #[test]
    fn block_groupings() {
        let het = QuadraticSpec::benchmark(Arrangement::Heterogeneous, 0).block_eigenvalues();
        assert_eq!(het[0], vec![1.0, 99.0, 4998.0]);
        assert_eq!(het[1], vec![2.0, 100.0, 4999.0]);
        assert_eq!(het[2], vec![3.0, 101.0, 5000.0]);
        let hom = QuadraticSpec::benchmark(Arrangement::Homogeneous, 0).block_eigenvalues();
        assert_eq!(hom[0], vec![1.0, 2.0, 3.0]);
        assert_eq!(hom[2], vec![4998.0, 4999.0, 5000.0]);
    }

    #[test]
    fn assembled_spectrum_and_structure() {
        for arrangement in [Arrangement::Homogeneous, Arrangement::Heterogeneous] {
            for seed in 0..3 {
                let p = QuadraticProblem::build(&QuadraticSpec::benchmark(arrangement, seed)).unwrap();
                let eig = symmetric_eigen(p.hessian()).unwrap();
                for (got, want) in eig.values.iter().zip(BENCHMARK_SPECTRUM) {
                    assert!((got - want).abs() <= 1e-8 * want.max(1.0), "{got} vs {want}");
                }
                assert!(p.off_block_max() <= 1e-10);
                // block eigenvalues survive the rotation
                let want = QuadraticSpec::benchmark(arrangement, seed).block_eigenvalues();
                for (b, w) in want.iter().enumerate() {
                    let e = symmetric_eigen(&p.block_hessian(b).unwrap()).unwrap();
                    for (x, y) in e.values.iter().zip(w) {
                        assert!((x - y).abs() <= 1e-8 * y);
                    }
                }
                let xx = p.design().matrix().matmul(p.design().matrix()).unwrap();
                assert!(xx.distance(p.hessian().matrix()) <= 1e-8 * p.hessian().matrix().frobenius());
            }
        }
    }

    #[test]
    fn scalar_case() {
        let l = Arc::new(BlockLayout::from_sizes(&[1]).unwrap());
        let p = QuadraticProblem::from_hessian(SymmetricMatrix::from_diagonal(&[2.0]), l.clone(), 1).unwrap();
        let w = BlockVector::new(vec![3.0], l.clone()).unwrap();
        assert_eq!(p.loss_at(&w).unwrap(), 9.0);
        assert_eq!(p.grad_at(&w).unwrap().as_slice(), &[6.0]);
        let z = BlockVector::zeros(l);
        assert_eq!(p.loss_at(&z).unwrap(), 0.0);
        assert_eq!(p.grad_at(&z).unwrap().as_slice(), &[0.0]);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let p = QuadraticProblem::build(&QuadraticSpec::benchmark(Arrangement::Heterogeneous, 1)).unwrap();
        let mut rng = RngStream::new(2, 0);
        let h = 1e-6;
        for _ in 0..20 {
            let w = random_point(&p, &mut rng);
            let g = p.grad_at(&w).unwrap();
            let scale = g.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for i in 0..p.dim() {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[i] += h;
                wm[i] -= h;
                let fd = (p.loss_at(&wp).unwrap() - p.loss_at(&wm).unwrap()) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-6 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn full_batch_is_exact() {
        let mut spec = QuadraticSpec::benchmark(Arrangement::Homogeneous, 3);
        spec.batch_size = 9;
        let p = QuadraticProblem::build(&spec).unwrap();
        let mut rng = RngStream::new(0, 0);
        let w = random_point(&p, &mut rng);
        let g = p.stoch_grad(&w, &mut rng).unwrap();
        let exact = p.grad_at(&w).unwrap();
        for i in 0..9 {
            assert!((g[i] - exact[i]).abs() <= 1e-9 * exact.norm());
        }
        let zero = BlockVector::zeros(p.layout().clone());
        assert!(p.stoch_grad(&zero, &mut rng).unwrap().norm() == 0.0);
    }

    #[test]
    fn enumerated_batches_are_unbiased() {
        let p = QuadraticProblem::build(&QuadraticSpec::benchmark(Arrangement::Heterogeneous, 5)).unwrap();
        let mut rng = RngStream::new(4, 0);
        let w = random_point(&p, &mut rng);
        let batches = all_subsets(9, 3);
        assert_eq!(batches.len(), 84);
        let mut mean = vec![0.0; 9];
        for rows in &batches {
            let (_, g) = p.grad_for_rows(&w, rows).unwrap();
            for (m, x) in mean.iter_mut().zip(g.as_slice()) {
                *m += x / batches.len() as f64;
            }
        }
        let exact = p.grad_at(&w).unwrap();
        for i in 0..9 {
            assert!((mean[i] - exact[i]).abs() <= 1e-10 * exact.norm().max(1.0));
        }
    }

    #[test]
    fn subsets_enumeration() {
        assert_eq!(all_subsets(4, 2).len(), 6);
        assert_eq!(all_subsets(3, 3), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn invalid_specs() {
        let mut s = QuadraticSpec::benchmark(Arrangement::Homogeneous, 0);
        s.spectrum.pop();
        assert!(QuadraticProblem::build(&s).is_err());
        let mut s = QuadraticSpec::benchmark(Arrangement::Homogeneous, 0);
        s.spectrum[0] = -1.0;
        assert!(QuadraticProblem::build(&s).is_err());
        let mut s = QuadraticSpec::benchmark(Arrangement::Homogeneous, 0);
        s.batch_size = 10;
        assert!(QuadraticProblem::build(&s).is_err());
    }
}
