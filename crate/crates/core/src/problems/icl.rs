//! In-context linear regression trained with an L-layer linear transformer.
//!
//! Each sequence holds a fresh regression task `y_i = wᵀx_i`. The model sees
//! `n` labelled pairs plus a query whose label slot is zero and must predict
//! the query label.
//!
//! Architecture (per layer, residual linear self-attention):
//!
//! ```text
//! Z_{l+1} = Z_l + (1/n) · A_l · (Z_l M) · (Z_lᵀ B_l Z_l)
//! ```
//!
//! with `Z_0 ∈ R^{(d+1)×(n+1)}` holding `(x_i; y_i)` columns followed by
//! `(x_q; 0)`, `M = diag(1,…,1,0)` removing the query column from the
//! keys/values, and the prediction read from entry `(d, n)` of `Z_L`.

use std::sync::Arc;

use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Objective;
use crate::error::{check_len, Error, Result};
use crate::numeric::{norm, BlockLayout, BlockVector, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// `x ~ N(0, I_d)`
    Light,
    /// `x = u·√γ`, `u` uniform on the unit sphere, `γ ~ Gamma(shape, scale)`.
    Heavy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IclConfig {
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    pub tail: Tail,
    #[serde(default = "default_gamma_shape")]
    pub gamma_shape: f64,
    #[serde(default = "default_gamma_scale")]
    pub gamma_scale: f64,
    #[serde(default = "default_layers")]
    pub layers: usize,
    /// Sequences per training step.
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Sequences in the fixed evaluation batch used for reported losses.
    #[serde(default = "default_eval_size")]
    pub eval_size: usize,
    /// Standard deviation of the i.i.d. normal parameter initialization.
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

fn default_d() -> usize {
    5
}

fn default_n() -> usize {
    20
}

fn default_gamma_shape() -> f64 {
    0.1
}

fn default_gamma_scale() -> f64 {
    10.0
}

fn default_layers() -> usize {
    3
}

fn default_batch_size() -> usize {
    256
}

fn default_eval_size() -> usize {
    1024
}

fn default_init_std() -> f64 {
    0.02
}

impl IclConfig {
    pub fn new(tail: Tail) -> Self {
        Self {
            d: default_d(),
            n: default_n(),
            tail,
            gamma_shape: default_gamma_shape(),
            gamma_scale: default_gamma_scale(),
            layers: default_layers(),
            batch_size: default_batch_size(),
            eval_size: default_eval_size(),
            init_std: default_init_std(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 || self.layers == 0 {
            return Err(Error::config("d, n and layers must be at least 1"));
        }
        if !(self.gamma_shape > 0.0 && self.gamma_scale > 0.0) {
            return Err(Error::config("gamma parameters must be positive"));
        }
        if self.batch_size == 0 || self.eval_size == 0 {
            return Err(Error::config("batch sizes must be at least 1"));
        }
        if !(self.init_std >= 0.0) {
            return Err(Error::config("init_std must be non-negative"));
        }
        Ok(())
    }
}

/// A batch of regression sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct IclBatch {
    pub d: usize,
    pub n: usize,
    /// `sequences × (n+1) × d`, row-major; index `n` is the query.
    pub xs: Vec<f64>,
    /// `sequences × (n+1)`; the query label is kept here for the loss but is
    /// never placed in the model input.
    pub ys: Vec<f64>,
    /// `sequences × d` latent regression vectors.
    pub ws: Vec<f64>,
    /// Per-covariate `γ` draws under heavy tails, same shape as `ys`.
    pub gammas: Option<Vec<f64>>,
}

impl IclBatch {
    pub fn len(&self) -> usize {
        self.ys.len() / (self.n + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn x(&self, seq: usize, i: usize) -> &[f64] {
        let start = (seq * (self.n + 1) + i) * self.d;
        &self.xs[start..start + self.d]
    }

    pub fn y(&self, seq: usize, i: usize) -> f64 {
        self.ys[seq * (self.n + 1) + i]
    }

    pub fn w(&self, seq: usize) -> &[f64] {
        &self.ws[seq * self.d..(seq + 1) * self.d]
    }

    pub fn query_label(&self, seq: usize) -> f64 {
        self.y(seq, self.n)
    }

    /// The model input `Z_0` of one sequence, row-major `(d+1) × (n+1)`.
    pub fn embed(&self, seq: usize) -> Vec<f64> {
        let cols = self.n + 1;
        let mut z = vec![0.0; (self.d + 1) * cols];
        for i in 0..cols {
            for (r, &x) in self.x(seq, i).iter().enumerate() {
                z[r * cols + i] = x;
            }
            if i < self.n {
                z[self.d * cols + i] = self.y(seq, i);
            }
        }
        z
    }

    /// Batch of `copies` identical sequences, all equal to sequence `seq`.
    pub fn repeat(&self, seq: usize, copies: usize) -> IclBatch {
        let per_x = (self.n + 1) * self.d;
        let per_y = self.n + 1;
        let mut out = IclBatch {
            d: self.d,
            n: self.n,
            xs: Vec::with_capacity(per_x * copies),
            ys: Vec::with_capacity(per_y * copies),
            ws: Vec::with_capacity(self.d * copies),
            gammas: self.gammas.as_ref().map(|_| Vec::new()),
        };
        for _ in 0..copies {
            out.xs.extend_from_slice(&self.xs[seq * per_x..(seq + 1) * per_x]);
            out.ys.extend_from_slice(&self.ys[seq * per_y..(seq + 1) * per_y]);
            out.ws.extend_from_slice(self.w(seq));
            if let (Some(dst), Some(src)) = (out.gammas.as_mut(), self.gammas.as_ref()) {
                dst.extend_from_slice(&src[seq * per_y..(seq + 1) * per_y]);
            }
        }
        out
    }
}

/// Draw `sequences` regression tasks; every covariate (context and query)
/// follows the configured tail.
pub fn sample_icl_batch(cfg: &IclConfig, sequences: usize, rng: &mut RngStream) -> Result<IclBatch> {
    cfg.validate()?;
    let (d, n) = (cfg.d, cfg.n);
    let gamma = Gamma::new(cfg.gamma_shape, cfg.gamma_scale)
        .map_err(|e| Error::config(format!("gamma distribution: {e}")))?;
    let mut xs = Vec::with_capacity(sequences * (n + 1) * d);
    let mut ys = Vec::with_capacity(sequences * (n + 1));
    let mut ws = Vec::with_capacity(sequences * d);
    let mut gammas = (cfg.tail == Tail::Heavy).then(|| Vec::with_capacity(sequences * (n + 1)));
    let mut x = vec![0.0; d];
    for _ in 0..sequences {
        let w: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..=n {
            for xi in x.iter_mut() {
                *xi = StandardNormal.sample(rng);
            }
            if let Some(gs) = gammas.as_mut() {
                let len = norm(&x);
                let g: f64 = gamma.sample(rng);
                let r = g.sqrt() / len;
                x.iter_mut().for_each(|xi| *xi *= r);
                gs.push(g);
            }
            ys.push(w.iter().zip(&x).map(|(a, b)| a * b).sum());
            xs.extend_from_slice(&x);
        }
        ws.extend_from_slice(&w);
    }
    Ok(IclBatch {
        d,
        n,
        xs,
        ys,
        ws,
        gammas,
    })
}

/// Linear transformer with per-layer `A_l` (value/projection) and `B_l`
/// (key-query product), flattened as blocks `A_0, B_0, A_1, B_1, …`.
#[derive(Debug, Clone)]
pub struct LinearTransformer {
    d: usize,
    n: usize,
    layers: usize,
    layout: Arc<BlockLayout>,
}

/// Per-layer activations kept for the backward pass.
struct LayerCache {
    z: Vec<f64>,
    bz: Vec<f64>,
    /// Context Gram matrix `(Z M)(Z M)ᵀ`.
    s: Vec<f64>,
    p: Vec<f64>,
}

impl LinearTransformer {
    pub fn new(d: usize, n: usize, layers: usize) -> Result<Self> {
        if d == 0 || n == 0 || layers == 0 {
            return Err(Error::config("d, n and layers must be at least 1"));
        }
        let m = d + 1;
        let layout = Arc::new(BlockLayout::from_matrices(&vec![(m, m); 2 * layers])?);
        Ok(Self {
            d,
            n,
            layers,
            layout,
        })
    }

    pub fn from_config(cfg: &IclConfig) -> Result<Self> {
        Self::new(cfg.d, cfg.n, cfg.layers)
    }

    pub fn layout(&self) -> &Arc<BlockLayout> {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.layout.dim()
    }

    pub fn init_params(&self, std: f64, rng: &mut RngStream) -> Result<BlockVector> {
        let normal = Normal::new(0.0, std).map_err(|e| Error::config(format!("init: {e}")))?;
        let data = (0..self.num_params()).map(|_| normal.sample(rng)).collect();
        BlockVector::new(data, self.layout.clone())
    }

    fn check(&self, params: &BlockVector, batch: &IclBatch) -> Result<()> {
        check_len(self.num_params(), params.len())?;
        check_len(self.d, batch.d)?;
        check_len(self.n, batch.n)?;
        Ok(())
    }

    fn layer_mats<'a>(&self, params: &'a [f64], l: usize) -> (&'a [f64], &'a [f64]) {
        let m2 = (self.d + 1) * (self.d + 1);
        let a = &params[2 * l * m2..(2 * l + 1) * m2];
        let b = &params[(2 * l + 1) * m2..(2 * l + 2) * m2];
        (a, b)
    }

    /// Run all layers on `z` in place, optionally keeping the per-layer
    /// activations. The attention product is associated as
    /// `((Z M)(Z M)ᵀ)(B Z)`, which keeps every intermediate `(d+1)`-rowed.
    fn forward_seq(&self, params: &[f64], z: &mut [f64], mut cache: Option<&mut Vec<LayerCache>>) {
        let rows = self.d + 1;
        let cols = self.n + 1;
        let inv_n = 1.0 / self.n as f64;
        let mut bz = vec![0.0; rows * cols];
        let mut gram = vec![0.0; rows * rows];
        let mut p = vec![0.0; rows * cols];
        let mut ap = vec![0.0; rows * cols];
        for l in 0..self.layers {
            let (a, b) = self.layer_mats(params, l);
            matmul(b, rows, rows, z, cols, &mut bz);
            // the query column is excluded from keys and values
            matmul_bt(z, rows, self.n, cols, z, rows, &mut gram);
            matmul(&gram, rows, rows, &bz, cols, &mut p);
            if let Some(c) = cache.as_deref_mut() {
                c.push(LayerCache {
                    z: z.to_vec(),
                    bz: bz.clone(),
                    s: gram.clone(),
                    p: p.clone(),
                });
            }
            matmul(a, rows, rows, &p, cols, &mut ap);
            for (zv, &v) in z.iter_mut().zip(&ap) {
                *zv += inv_n * v;
            }
        }
    }

    /// Prediction for every sequence of the batch.
    pub fn forward(&self, params: &BlockVector, batch: &IclBatch) -> Result<Vec<f64>> {
        self.check(params, batch)?;
        let cols = self.n + 1;
        Ok((0..batch.len())
            .map(|s| {
                let mut z = batch.embed(s);
                self.forward_seq(params.as_slice(), &mut z, None);
                z[self.d * cols + self.n]
            })
            .collect())
    }

    /// `Z_l` for `l = 0..=L` of one embedded sequence.
    pub fn layer_states(&self, params: &BlockVector, z0: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_len(self.num_params(), params.len())?;
        check_len((self.d + 1) * (self.n + 1), z0.len())?;
        let mut cache = Vec::with_capacity(self.layers);
        let mut z = z0.to_vec();
        self.forward_seq(params.as_slice(), &mut z, Some(&mut cache));
        let mut states: Vec<Vec<f64>> = cache.into_iter().map(|c| c.z).collect();
        states.push(z);
        Ok(states)
    }

    /// Mean squared query error over the batch.
    pub fn loss(&self, params: &BlockVector, batch: &IclBatch) -> Result<f64> {
        let preds = self.forward(params, batch)?;
        let loss = preds
            .iter()
            .enumerate()
            .map(|(s, &yh)| (yh - batch.query_label(s)).powi(2))
            .sum::<f64>()
            / batch.len() as f64;
        if !loss.is_finite() {
            return Err(Error::non_finite("linear transformer loss"));
        }
        Ok(loss)
    }

    /// Loss and its exact gradient by reverse accumulation through the layer
    /// recursion.
    pub fn loss_grad(&self, params: &BlockVector, batch: &IclBatch) -> Result<(f64, BlockVector)> {
        self.check(params, batch)?;
        let rows = self.d + 1;
        let cols = self.n + 1;
        let m2 = rows * rows;
        let inv_n = 1.0 / self.n as f64;
        let theta = params.as_slice();
        let mut grad = BlockVector::zeros(self.layout.clone());
        let gsl = grad.as_mut_slice();
        let mut loss = 0.0;
        let batch_len = batch.len() as f64;

        let mut cache = Vec::with_capacity(self.layers);
        let mut gz = vec![0.0; rows * cols];
        let mut gp = vec![0.0; rows * cols];
        let mut gbz = vec![0.0; rows * cols];
        let mut tmp = vec![0.0; rows * cols];
        let mut small = vec![0.0; m2];
        let mut ds = vec![0.0; m2];

        for s in 0..batch.len() {
            cache.clear();
            let mut z = batch.embed(s);
            self.forward_seq(theta, &mut z, Some(&mut cache));
            let pred = z[self.d * cols + self.n];
            let resid = pred - batch.query_label(s);
            loss += resid * resid;

            gz.iter_mut().for_each(|x| *x = 0.0);
            gz[self.d * cols + self.n] = 2.0 * resid / batch_len;

            for l in (0..self.layers).rev() {
                let c = &cache[l];
                let (a, b) = self.layer_mats(theta, l);
                let ga = &mut gsl[2 * l * m2..(2 * l + 1) * m2];
                // dA += (1/n) G Pᵀ
                matmul_bt(&gz, rows, cols, cols, &c.p, rows, &mut small);
                for (g, &v) in ga.iter_mut().zip(&small) {
                    *g += inv_n * v;
                }
                // GP = (1/n) Aᵀ G
                matmul_at(a, rows, rows, &gz, cols, &mut gp);
                gp.iter_mut().for_each(|x| *x *= inv_n);
                // dS = GP (BZ)ᵀ, d(BZ) = S GP (S is symmetric)
                matmul_bt(&gp, rows, cols, cols, &c.bz, rows, &mut ds);
                matmul(&c.s, rows, rows, &gp, cols, &mut gbz);
                // dB += d(BZ) Zᵀ
                let gb = &mut gsl[(2 * l + 1) * m2..(2 * l + 2) * m2];
                matmul_bt(&gbz, rows, cols, cols, &c.z, rows, &mut small);
                for (g, &v) in gb.iter_mut().zip(&small) {
                    *g += v;
                }
                // dZ = G (residual) + Bᵀ d(BZ) + (dS + dSᵀ)(Z M)
                matmul_at(b, rows, rows, &gbz, cols, &mut tmp);
                for (g, &v) in gz.iter_mut().zip(&tmp) {
                    *g += v;
                }
                for r in 0..rows {
                    for q in 0..rows {
                        small[r * rows + q] = ds[r * rows + q] + ds[q * rows + r];
                    }
                }
                matmul(&small, rows, rows, &c.z, cols, &mut tmp);
                for r in 0..rows {
                    let grow = &mut gz[r * cols..r * cols + self.n];
                    for (g, &v) in grow.iter_mut().zip(&tmp[r * cols..r * cols + self.n]) {
                        *g += v;
                    }
                }
            }
        }
        let loss = loss / batch_len;
        if !loss.is_finite() || gsl.iter().any(|g| !g.is_finite()) {
            return Err(Error::non_finite("linear transformer loss or gradient"));
        }
        Ok((loss, grad))
    }
}

/// `out = a[:, ..k] · b[:, ..k]ᵀ` for row-major `a` (r×stride) and
/// `b` (c×stride).
fn matmul_bt(a: &[f64], r: usize, k: usize, stride: usize, b: &[f64], c: usize, out: &mut [f64]) {
    for i in 0..r {
        let arow = &a[i * stride..i * stride + k];
        for j in 0..c {
            let brow = &b[j * stride..j * stride + k];
            out[i * c + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
}

/// `out = aᵀ (r×k) · b (k×c)` for row-major `a` (k×r) and `b` (k×c).
fn matmul_at(a: &[f64], k: usize, r: usize, b: &[f64], c: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for kk in 0..k {
        let brow = &b[kk * c..(kk + 1) * c];
        for i in 0..r {
            let aki = a[kk * r + i];
            if aki == 0.0 {
                continue;
            }
            let orow = &mut out[i * c..(i + 1) * c];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aki * bv;
            }
        }
    }
}

/// `out = a (r×k) · b (k×c)`, all row-major.
fn matmul(a: &[f64], r: usize, k: usize, b: &[f64], c: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for i in 0..r {
        let orow = &mut out[i * c..(i + 1) * c];
        for kk in 0..k {
            let aik = a[i * k + kk];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[kk * c..(kk + 1) * c];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
}

/// Online in-context regression objective: a fresh batch per stochastic
/// gradient, a fixed evaluation batch for reported losses.
#[derive(Debug, Clone)]
pub struct IclProblem {
    cfg: IclConfig,
    model: LinearTransformer,
    eval: IclBatch,
}

impl IclProblem {
    pub fn new(cfg: IclConfig, eval_rng: &mut RngStream) -> Result<Self> {
        cfg.validate()?;
        let model = LinearTransformer::from_config(&cfg)?;
        let eval = sample_icl_batch(&cfg, cfg.eval_size, eval_rng)?;
        Ok(Self { cfg, model, eval })
    }

    pub fn config(&self) -> &IclConfig {
        &self.cfg
    }

    pub fn model(&self) -> &LinearTransformer {
        &self.model
    }

    pub fn eval_batch(&self) -> &IclBatch {
        &self.eval
    }
}

impl Objective for IclProblem {
    fn layout(&self) -> &Arc<BlockLayout> {
        self.model.layout()
    }

    fn loss(&self, theta: &BlockVector) -> Result<f64> {
        self.model.loss(theta, &self.eval)
    }

    fn gradient(&self, theta: &BlockVector) -> Result<BlockVector> {
        Ok(self.model.loss_grad(theta, &self.eval)?.1)
    }

    fn stochastic_gradient(
        &self,
        theta: &BlockVector,
        rng: &mut RngStream,
    ) -> Result<(f64, BlockVector)> {
        let batch = sample_icl_batch(&self.cfg, self.cfg.batch_size, rng)?;
        self.model.loss_grad(theta, &batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(tail: Tail) -> IclConfig {
        IclConfig {
            d: 3,
            n: 6,
            layers: 2,
            ..IclConfig::new(tail)
        }
    }

    #[test]
    fn labels_are_exact_linear_functions() {
        for tail in [Tail::Light, Tail::Heavy] {
            let b = sample_icl_batch(&IclConfig::new(tail), 8, &mut RngStream::new(1, 1)).unwrap();
            for s in 0..b.len() {
                for i in 0..=b.n {
                    let wx: f64 = b.w(s).iter().zip(b.x(s, i)).map(|(a, c)| a * c).sum();
                    assert_eq!(b.y(s, i), wx);
                }
                let z = b.embed(s);
                assert_eq!(z[b.d * (b.n + 1) + b.n], 0.0);
            }
        }
    }

    #[test]
    fn heavy_covariates_have_gamma_norms() {
        let b = sample_icl_batch(&IclConfig::new(Tail::Heavy), 16, &mut RngStream::new(2, 0)).unwrap();
        let gs = b.gammas.as_ref().unwrap();
        for s in 0..b.len() {
            for i in 0..=b.n {
                let x = b.x(s, i);
                let sq: f64 = x.iter().map(|v| v * v).sum();
                let g = gs[s * (b.n + 1) + i];
                assert!((sq / g - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_parameters_predict_zero() {
        let cfg = IclConfig::new(Tail::Light);
        let model = LinearTransformer::from_config(&cfg).unwrap();
        let b = sample_icl_batch(&cfg, 10, &mut RngStream::new(0, 0)).unwrap();
        let zero = BlockVector::zeros(model.layout().clone());
        assert!(model.forward(&zero, &b).unwrap().iter().all(|&y| y == 0.0));
        let (loss, _) = model.loss_grad(&zero, &b).unwrap();
        let want = (0..b.len()).map(|s| b.query_label(s).powi(2)).sum::<f64>() / b.len() as f64;
        assert!((loss - want).abs() <= 1e-14 * want);
    }

    #[test]
    fn doubling_labels_quadruples_zero_param_loss() {
        let cfg = IclConfig::new(Tail::Light);
        let model = LinearTransformer::from_config(&cfg).unwrap();
        let b = sample_icl_batch(&cfg, 10, &mut RngStream::new(3, 0)).unwrap();
        let mut b2 = b.clone();
        b2.ys.iter_mut().for_each(|y| *y *= 2.0);
        b2.ws.iter_mut().for_each(|w| *w *= 2.0);
        let zero = BlockVector::zeros(model.layout().clone());
        let l1 = model.loss(&zero, &b).unwrap();
        let l2 = model.loss(&zero, &b2).unwrap();
        assert!((l2 - 4.0 * l1).abs() <= 1e-12 * l2);
    }

    #[test]
    fn query_label_slot_never_reaches_context() {
        let cfg = small_cfg(Tail::Light);
        let model = LinearTransformer::from_config(&cfg).unwrap();
        let params = model.init_params(0.3, &mut RngStream::new(5, 0)).unwrap();
        let b = sample_icl_batch(&cfg, 1, &mut RngStream::new(6, 0)).unwrap();
        let z0 = b.embed(0);
        let mut perturbed = z0.clone();
        let cols = cfg.n + 1;
        perturbed[cfg.d * cols + cfg.n] = 3.7;
        let a = model.layer_states(&params, &z0).unwrap();
        let c = model.layer_states(&params, &perturbed).unwrap();
        for (za, zc) in a.iter().zip(&c) {
            for r in 0..=cfg.d {
                for i in 0..cfg.n {
                    assert_eq!(za[r * cols + i], zc[r * cols + i]);
                }
            }
        }
    }

    #[test]
    fn single_layer_prediction_is_second_order_in_parameters() {
        let cfg = IclConfig {
            layers: 1,
            ..IclConfig::new(Tail::Light)
        };
        let model = LinearTransformer::from_config(&cfg).unwrap();
        let dir = model.init_params(1.0, &mut RngStream::new(8, 0)).unwrap();
        let b = sample_icl_batch(&cfg, 4, &mut RngStream::new(9, 0)).unwrap();
        let mut preds = Vec::new();
        for eps in [1e-2, 1e-3, 1e-4] {
            let mut p = dir.clone();
            p.scale(eps);
            preds.push(model.forward(&p, &b).unwrap());
        }
        // A and B both scale with eps, so the prediction scales with eps².
        for s in 0..b.len() {
            let r1 = preds[0][s] / preds[1][s];
            let r2 = preds[1][s] / preds[2][s];
            assert!((r1 - 100.0).abs() < 1e-6 && (r2 - 100.0).abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        for tail in [Tail::Light, Tail::Heavy] {
            let cfg = small_cfg(tail);
            let model = LinearTransformer::from_config(&cfg).unwrap();
            let b = sample_icl_batch(&cfg, 3, &mut RngStream::new(10, 0)).unwrap();
            let params = model.init_params(0.2, &mut RngStream::new(11, 0)).unwrap();
            let (_, g) = model.loss_grad(&params, &b).unwrap();
            let scale = g.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let h = 1e-5;
            for i in 0..params.len() {
                let mut p = params.clone();
                p[i] += h;
                let lp = model.loss(&p, &b).unwrap();
                p[i] -= 2.0 * h;
                let lm = model.loss(&p, &b).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-5 * scale.max(1e-8), "{i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn loss_from_grad_path_matches_forward() {
        let cfg = small_cfg(Tail::Heavy);
        let model = LinearTransformer::from_config(&cfg).unwrap();
        let b = sample_icl_batch(&cfg, 5, &mut RngStream::new(12, 0)).unwrap();
        let params = model.init_params(0.1, &mut RngStream::new(13, 0)).unwrap();
        let (l, _) = model.loss_grad(&params, &b).unwrap();
        assert!((l - model.loss(&params, &b).unwrap()).abs() <= 1e-14 * l.max(1e-300));
    }

    #[test]
    fn repeated_batch_has_identical_rows() {
        let b = sample_icl_batch(&IclConfig::new(Tail::Heavy), 3, &mut RngStream::new(0, 0)).unwrap();
        let r = b.repeat(1, 4);
        assert_eq!(r.len(), 4);
        assert_eq!(r.x(3, 5), b.x(1, 5));
        assert_eq!(r.query_label(2), b.query_label(1));
    }

    #[test]
    fn layout_has_two_blocks_per_layer() {
        let m = LinearTransformer::new(5, 20, 3).unwrap();
        assert_eq!(m.layout().num_blocks(), 6);
        assert!(m.layout().sizes().iter().all(|&s| s == 36));
        assert_eq!(m.num_params(), 216);
    }
}
