//! Feedforward surrogates for effective tensors.
//!
//! A shared trunk of affine layers, each followed by batch normalization and a
//! split activation (the neurons of a layer are divided into four equal groups
//! using SELU, tanh, sigmoid and the identity), feeds one of two heads:
//!
//! * [`Head::VoigtReuss`] squashes `m(m+1)/2` outputs through a sigmoid and
//!   reads them as `(ξ_q, ξ_λ)`; the prediction is `Y_V − L Q Λ Qᵀ Lᵀ`, which
//!   lies between the bounds for every parameter value.
//! * [`Head::Vanilla`] regresses standardized upper-triangle components.
//!
//! Gradients are computed by hand-written reverse-mode differentiation.

mod checkpoint;
mod eval;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use eval::{
    evaluate, ContrastStats, EvalReport, HillBaseline, Predictor, SampleMetrics, VIOLATION_TOL,
};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bounds::BoundsPair;
use crate::error::{Error, Result};
use crate::orth::{n_angles, param_to_q, param_to_q_backward};
use crate::rng::stream_rng;
use crate::spd::{Matrix, SymMat};
use crate::specnorm::{compose, denormalize, normalize};

pub const SELU_LAMBDA: f64 = 1.0507009873554805;
pub const SELU_ALPHA: f64 = 1.6732632423543772;
const BN_MOMENTUM: f64 = 0.1;
const BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    #[serde(rename = "vr")]
    VoigtReuss,
    Vanilla,
}

impl std::str::FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vr" => Ok(Head::VoigtReuss),
            "vanilla" => Ok(Head::Vanilla),
            other => Err(Error::invalid(format!("unknown head {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub head: Head,
    /// Dimension of the predicted tensor.
    pub tensor_dim: usize,
    pub batch_norm: bool,
    pub seed: u64,
}

impl NetConfig {
    pub fn default_hidden(dim: usize) -> Vec<usize> {
        if dim == 3 {
            vec![512, 256, 128, 64, 32, 16]
        } else {
            vec![256, 128, 64, 32, 16]
        }
    }

    pub fn new(input_dim: usize, tensor_dim: usize, head: Head, seed: u64) -> Self {
        NetConfig {
            input_dim,
            hidden: Self::default_hidden(tensor_dim),
            head,
            tensor_dim,
            batch_norm: true,
            seed,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.tensor_dim * (self.tensor_dim + 1) / 2
    }

    /// `(ξ_q, ξ_λ)` widths of the VR head.
    pub fn vr_split(&self) -> (usize, usize) {
        (n_angles(self.tensor_dim), self.tensor_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.tensor_dim == 0 {
            return Err(Error::invalid("input and tensor dimensions must be positive"));
        }
        if let Some(h) = self.hidden.iter().find(|&&h| h == 0 || h % 4 != 0) {
            return Err(Error::invalid(format!(
                "hidden width {h} is not a positive multiple of 4"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    /// Relative improvement below which an epoch counts as a plateau.
    pub plateau_threshold: f64,
    pub min_lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 750,
            batch_size: 1024,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            plateau_factor: 0.5,
            plateau_patience: 20,
            plateau_threshold: 1e-4,
            min_lr: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size < 2 {
            return Err(Error::invalid("need at least one epoch and batches of two or more"));
        }
        if !(self.lr > 0.0 && self.min_lr > 0.0 && self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::invalid("learning rates must be positive and the plateau factor in (0, 1)"));
        }
        Ok(())
    }
}

/// One training or evaluation example.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub contrast: f64,
    pub input: Vec<f64>,
    pub target: SymMat,
    pub bounds: BoundsPair,
    /// `target` on the normalized scale.
    pub normalized: SymMat,
}

impl Sample {
    pub fn new(id: impl Into<String>, contrast: f64, input: Vec<f64>, target: SymMat, bounds: BoundsPair) -> Result<Self> {
        let normalized = normalize(&target, &bounds)?.y_tilde;
        Ok(Sample {
            id: id.into(),
            contrast,
            input,
            target,
            bounds,
            normalized,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `out × in`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hidden {
    pub dense: Dense,
    pub bn: Option<BatchNorm>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    pub input_mean: Array1<f64>,
    pub input_std: Array1<f64>,
    /// Standardization of the vanilla head's components.
    pub target_mean: Array1<f64>,
    pub target_std: Array1<f64>,
    pub hidden: Vec<Hidden>,
    pub output: Dense,
}

impl NetParams {
    /// Trainable arrays in declaration order.
    fn trainable(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for h in &self.hidden {
            v.push(h.dense.w.as_slice().expect("standard layout"));
            v.push(h.dense.b.as_slice().expect("standard layout"));
            if let Some(bn) = &h.bn {
                v.push(bn.gamma.as_slice().expect("standard layout"));
                v.push(bn.beta.as_slice().expect("standard layout"));
            }
        }
        v.push(self.output.w.as_slice().expect("standard layout"));
        v.push(self.output.b.as_slice().expect("standard layout"));
        v
    }

    fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for h in &mut self.hidden {
            v.push(h.dense.w.as_slice_mut().expect("standard layout"));
            v.push(h.dense.b.as_slice_mut().expect("standard layout"));
            if let Some(bn) = &mut h.bn {
                v.push(bn.gamma.as_slice_mut().expect("standard layout"));
                v.push(bn.beta.as_slice_mut().expect("standard layout"));
            }
        }
        v.push(self.output.w.as_slice_mut().expect("standard layout"));
        v.push(self.output.b.as_slice_mut().expect("standard layout"));
        v
    }

    pub fn n_trainable(&self) -> usize {
        self.trainable().iter().map(|a| a.len()).sum()
    }

    pub fn trainable_flat(&self) -> Vec<f64> {
        self.trainable().concat()
    }

    pub fn set_trainable_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_trainable() {
            return Err(Error::invalid(format!(
                "{} values for {} trainable parameters",
                flat.len(),
                self.n_trainable()
            )));
        }
        let mut off = 0;
        for a in self.trainable_mut() {
            a.copy_from_slice(&flat[off..off + a.len()]);
            off += a.len();
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.trainable().iter().all(|a| a.iter().all(|v| v.is_finite()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch normalization.
    Train,
    /// Running statistics in batch normalization.
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

struct LayerCache {
    input: Array2<f64>,
    /// Normalized pre-activations (BN) or raw affine outputs.
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    /// Activation inputs.
    pre: Array2<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
}

struct ForwardPass {
    layers: Vec<LayerCache>,
    last_hidden: Array2<f64>,
    /// Head outputs: `ξ` for VR, standardized components for vanilla.
    outputs: Array2<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn activate(pre: &Array2<f64>) -> Array2<f64> {
    let q = pre.ncols() / 4;
    let mut out = pre.clone();
    for mut row in out.rows_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = match c / q {
                0 => {
                    if *v > 0.0 {
                        SELU_LAMBDA * *v
                    } else {
                        SELU_LAMBDA * SELU_ALPHA * v.exp_m1()
                    }
                }
                1 => v.tanh(),
                2 => sigmoid(*v),
                _ => *v,
            };
        }
    }
    out
}

fn activation_grad(pre: &Array2<f64>, upstream: &Array2<f64>) -> Array2<f64> {
    let q = pre.ncols() / 4;
    let mut g = upstream.clone();
    for (mut grow, prow) in g.rows_mut().into_iter().zip(pre.rows()) {
        for (c, (gv, &x)) in grow.iter_mut().zip(prow.iter()).enumerate() {
            *gv *= match c / q {
                0 => {
                    if x > 0.0 {
                        SELU_LAMBDA
                    } else {
                        SELU_LAMBDA * SELU_ALPHA * x.exp()
                    }
                }
                1 => 1.0 - x.tanh().powi(2),
                2 => {
                    let s = sigmoid(x);
                    s * (1.0 - s)
                }
                _ => 1.0,
            };
        }
    }
    g
}

fn lecun_dense(rng: &mut rand_chacha::ChaCha8Rng, fan_in: usize, fan_out: usize) -> Dense {
    let normal = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("positive std");
    Dense {
        w: Array2::from_shape_simple_fn((fan_out, fan_in), || normal.sample(rng)),
        b: Array1::zeros(fan_out),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Surrogate {
    pub config: NetConfig,
    pub params: NetParams,
}

impl Surrogate {
    /// LeCun-normal weights, zero biases, unit standardization.
    pub fn new(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(config.seed, 0);
        let mut fan_in = config.input_dim;
        let mut hidden = Vec::with_capacity(config.hidden.len());
        for &width in &config.hidden {
            let bn = config.batch_norm.then(|| BatchNorm {
                gamma: Array1::ones(width),
                beta: Array1::zeros(width),
                running_mean: Array1::zeros(width),
                running_var: Array1::ones(width),
            });
            hidden.push(Hidden {
                dense: lecun_dense(&mut rng, fan_in, width),
                bn,
            });
            fan_in = width;
        }
        let out = config.output_dim();
        let params = NetParams {
            input_mean: Array1::zeros(config.input_dim),
            input_std: Array1::ones(config.input_dim),
            target_mean: Array1::zeros(out),
            target_std: Array1::ones(out),
            hidden,
            output: lecun_dense(&mut rng, fan_in, out),
        };
        Ok(Surrogate { config, params })
    }

    /// Per-feature and (for the vanilla head) per-component z-scores.
    pub fn fit_standardization(&mut self, train: &[Sample]) -> Result<()> {
        if train.is_empty() {
            return Err(Error::EmptySplit("training split".into()));
        }
        let x = self.input_matrix(train)?;
        let (mean, std) = column_stats(x.view());
        self.params.input_mean = mean;
        self.params.input_std = std;
        let t = Array2::from_shape_fn((train.len(), self.config.output_dim()), |(i, c)| {
            train[i].target.packed()[c]
        });
        let (mean, std) = column_stats(t.view());
        self.params.target_mean = mean;
        self.params.target_std = std;
        Ok(())
    }

    fn input_matrix<S: std::borrow::Borrow<Sample>>(&self, samples: &[S]) -> Result<Array2<f64>> {
        let d = self.config.input_dim;
        if let Some(s) = samples.iter().map(|s| s.borrow()).find(|s| s.input.len() != d) {
            return Err(Error::invalid(format!(
                "sample {} has {} inputs, model expects {d}",
                s.id,
                s.input.len()
            )));
        }
        Ok(Array2::from_shape_fn((samples.len(), d), |(i, j)| samples[i].borrow().input[j]))
    }

    fn forward_pass(&self, x: ArrayView2<f64>, mode: Mode) -> ForwardPass {
        let p = &self.params;
        let mut h = (&x - &p.input_mean) / &p.input_std;
        let mut layers = Vec::with_capacity(p.hidden.len());
        for layer in &p.hidden {
            let a = h.dot(&layer.dense.w.t()) + &layer.dense.b;
            let width = a.ncols();
            let (xhat, inv_std, pre, batch_mean, batch_var) = match &layer.bn {
                Some(bn) => {
                    let (mean, var) = match mode {
                        Mode::Train => {
                            let mean = a.mean_axis(Axis(0)).expect("nonempty batch");
                            let var = (&a - &mean).mapv(|v| v * v).mean_axis(Axis(0)).expect("nonempty batch");
                            (mean, var)
                        }
                        Mode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
                    };
                    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                    let xhat = (&a - &mean) * &inv_std;
                    let pre = &xhat * &bn.gamma + &bn.beta;
                    (xhat, inv_std, pre, mean, var)
                }
                None => (a.clone(), Array1::ones(width), a, Array1::zeros(width), Array1::zeros(width)),
            };
            let out = activate(&pre);
            layers.push(LayerCache {
                input: h,
                xhat,
                inv_std,
                pre,
                batch_mean,
                batch_var,
            });
            h = out;
        }
        let logits = h.dot(&p.output.w.t()) + &p.output.b;
        let outputs = match self.config.head {
            Head::VoigtReuss => logits.mapv(sigmoid),
            Head::Vanilla => logits,
        };
        ForwardPass {
            layers,
            last_hidden: h,
            outputs,
        }
    }

    /// Raw head outputs for a batch of inputs.
    pub fn forward(&self, x: ArrayView2<f64>, mode: Mode) -> Result<Array2<f64>> {
        if x.ncols() != self.config.input_dim {
            return Err(Error::invalid(format!(
                "input width {} but model expects {}",
                x.ncols(),
                self.config.input_dim
            )));
        }
        if mode == Mode::Train && x.nrows() < 2 && self.config.batch_norm {
            return Err(Error::invalid("batch statistics need at least two rows"));
        }
        Ok(self.forward_pass(x, mode).outputs)
    }

    fn backward(&self, pass: &ForwardPass, d_out: Array2<f64>, mode: Mode) -> Vec<Vec<f64>> {
        let p = &self.params;
        let d_logits = match self.config.head {
            Head::VoigtReuss => d_out * &pass.outputs.mapv(|s| s * (1.0 - s)),
            Head::Vanilla => d_out,
        };
        let mut grads_rev: Vec<Vec<f64>> = Vec::new();
        grads_rev.push(d_logits.sum_axis(Axis(0)).to_vec());
        grads_rev.push(d_logits.t().dot(&pass.last_hidden).into_raw_vec_and_offset().0);
        let mut dh = d_logits.dot(&p.output.w);
        let batch = dh.nrows() as f64;
        for (layer, cache) in p.hidden.iter().zip(&pass.layers).rev() {
            let dpre = activation_grad(&cache.pre, &dh);
            let da = match &layer.bn {
                Some(bn) => {
                    grads_rev.push(dpre.sum_axis(Axis(0)).to_vec());
                    grads_rev.push((&dpre * &cache.xhat).sum_axis(Axis(0)).to_vec());
                    let dxhat = &dpre * &bn.gamma;
                    match mode {
                        Mode::Train => {
                            let sum = dxhat.sum_axis(Axis(0));
                            let sum_x = (&dxhat * &cache.xhat).sum_axis(Axis(0));
                            ((&dxhat * batch - &sum) - &cache.xhat * &sum_x) * &cache.inv_std / batch
                        }
                        Mode::Eval => dxhat * &cache.inv_std,
                    }
                }
                None => dpre,
            };
            grads_rev.push(da.sum_axis(Axis(0)).to_vec());
            grads_rev.push(da.t().dot(&cache.input).into_raw_vec_and_offset().0);
            dh = da.dot(&layer.dense.w);
        }
        grads_rev.reverse();
        grads_rev
    }

    /// Loss of a batch and its gradient with respect to the trainable
    /// parameters, flattened in declaration order.
    pub fn loss_and_grad(&self, batch: &[Sample], mode: Mode) -> Result<(f64, Vec<f64>)> {
        let refs: Vec<&Sample> = batch.iter().collect();
        let (loss, grad, _) = self.loss_grad_stats(&refs, mode)?;
        Ok((loss, grad))
    }

    fn loss_grad_stats(&self, batch: &[&Sample], mode: Mode) -> Result<(f64, Vec<f64>, ForwardPass)> {
        if batch.is_empty() {
            return Err(Error::EmptySplit("empty batch".into()));
        }
        if mode == Mode::Train && batch.len() < 2 && self.config.batch_norm {
            return Err(Error::invalid("batch statistics need at least two rows"));
        }
        let x = self.input_matrix(batch)?;
        let pass = self.forward_pass(x.view(), mode);
        let (loss, d_out) = self.head_loss(&pass.outputs, batch, true)?;
        let grads = self.backward(&pass, d_out.expect("gradient requested"), mode);
        Ok((loss, grads.concat(), pass))
    }

    pub fn loss(&self, batch: &[Sample], mode: Mode) -> Result<f64> {
        let refs: Vec<&Sample> = batch.iter().collect();
        self.loss_refs(&refs, mode)
    }

    fn loss_refs(&self, batch: &[&Sample], mode: Mode) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptySplit("empty batch".into()));
        }
        let x = self.input_matrix(batch)?;
        let pass = self.forward_pass(x.view(), mode);
        Ok(self.head_loss(&pass.outputs, batch, false)?.0)
    }

    fn head_loss(&self, out: &Array2<f64>, batch: &[&Sample], with_grad: bool) -> Result<(f64, Option<Array2<f64>>)> {
        let m = self.config.tensor_dim;
        let nb = batch.len() as f64;
        let mut total = 0.0;
        let mut grad = with_grad.then(|| Array2::zeros(out.raw_dim()));
        match self.config.head {
            Head::VoigtReuss => {
                let (nq, _) = self.config.vr_split();
                for (i, s) in batch.iter().enumerate() {
                    if s.normalized.dim() != m {
                        return Err(Error::invalid(format!(
                            "sample {} has rank-deficient bounds",
                            s.id
                        )));
                    }
                    let xi = out.row(i).to_vec();
                    let (xq, xl) = xi.split_at(nq);
                    let (q, _) = param_to_q(xq, m)?;
                    let pred = SymMat::from_diag(xl).congruence(&q);
                    let diff = &pred - &s.normalized;
                    let f = diff.frob_norm();
                    total += f * f / m as f64;
                    if let Some(g) = grad.as_mut() {
                        let gmat = diff.to_dense().scale(2.0 / (m as f64 * nb));
                        let gq = gmat.matmul(&q);
                        let dq = Matrix::from_fn(m, m, |a, b| 2.0 * gq[(a, b)] * xl[b]);
                        let qtgq = q.transpose().matmul(&gq);
                        let dxq = param_to_q_backward(xq, m, &dq);
                        for (k, v) in dxq.iter().enumerate() {
                            g[(i, k)] = *v;
                        }
                        for k in 0..m {
                            g[(i, nq + k)] = qtgq[(k, k)];
                        }
                    }
                }
            }
            Head::Vanilla => {
                let p = &self.params;
                let weights = component_weights(m);
                for (i, s) in batch.iter().enumerate() {
                    for (c, w) in weights.iter().enumerate() {
                        let z = (s.target.packed()[c] - p.target_mean[c]) / p.target_std[c];
                        let e = out[(i, c)] - z;
                        total += w * e * e / m as f64;
                        if let Some(g) = grad.as_mut() {
                            g[(i, c)] = 2.0 * w * e / (m as f64 * nb);
                        }
                    }
                }
            }
        }
        Ok((total / nb, grad))
    }

    fn update_running_stats(&mut self, pass: ForwardPass, n: usize) {
        let unbias = if n > 1 { n as f64 / (n as f64 - 1.0) } else { 1.0 };
        for (layer, cache) in self.params.hidden.iter_mut().zip(pass.layers) {
            if let Some(bn) = &mut layer.bn {
                bn.running_mean = &bn.running_mean * (1.0 - BN_MOMENTUM) + &cache.batch_mean * BN_MOMENTUM;
                bn.running_var = &bn.running_var * (1.0 - BN_MOMENTUM) + &cache.batch_var * (BN_MOMENTUM * unbias);
            }
        }
    }

    /// Prediction in physical units for one input against its bounds.
    pub fn predict(&self, input: &[f64], bounds: &BoundsPair) -> Result<SymMat> {
        match self.config.head {
            Head::VoigtReuss => self.vr_predict(input, bounds),
            Head::Vanilla => {
                let x = Array2::from_shape_vec((1, input.len()), input.to_vec())
                    .map_err(|e| Error::invalid(e.to_string()))?;
                let z = self.forward(x.view(), Mode::Eval)?;
                let p = &self.params;
                let packed: Vec<f64> = (0..self.config.output_dim())
                    .map(|c| z[(0, c)] * p.target_std[c] + p.target_mean[c])
                    .collect();
                SymMat::from_packed(self.config.tensor_dim, packed)
            }
        }
    }

    /// `Y_V − L Q(ξ_q) diag(ξ_λ) Q(ξ_q)ᵀ Lᵀ`; single-phase bounds give `Y_V`.
    pub fn vr_predict(&self, input: &[f64], bounds: &BoundsPair) -> Result<SymMat> {
        if self.config.head != Head::VoigtReuss {
            return Err(Error::invalid("vr_predict needs a Voigt-Reuss head"));
        }
        if bounds.rank == 0 {
            return Ok(bounds.y_voigt.clone());
        }
        if bounds.rank != self.config.tensor_dim {
            return Err(Error::invalid(format!(
                "bounds of rank {} for a head of dim {}",
                bounds.rank, self.config.tensor_dim
            )));
        }
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec())
            .map_err(|e| Error::invalid(e.to_string()))?;
        let xi = self.forward(x.view(), Mode::Eval)?.row(0).to_vec();
        let (xq, xl) = xi.split_at(self.config.vr_split().0);
        denormalize(&compose(xq, xl)?, bounds)
    }

    /// Mean loss over `samples` in evaluation mode, in chunks.
    pub fn mean_loss(&self, samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::EmptySplit("evaluation split".into()));
        }
        let mut total = 0.0;
        for chunk in samples.chunks(4096) {
            total += self.loss(chunk, Mode::Eval)? * chunk.len() as f64;
        }
        Ok(total / samples.len() as f64)
    }
}

/// Off-diagonal components count twice in the Frobenius norm.
fn component_weights(m: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(m * (m + 1) / 2);
    for i in 0..m {
        for j in i..m {
            w.push(if i == j { 1.0 } else { 2.0 });
        }
    }
    w
}

fn column_stats(x: ArrayView2<f64>) -> (Array1<f64>, Array1<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("nonempty");
    let std = x
        .var_axis(Axis(0), 0.0)
        .mapv(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 });
    (mean, std)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + cfg.adam_eps);
        }
    }
}

/// Halves the learning rate after `patience` epochs without relative
/// improvement of the validation loss.
struct Plateau {
    best: f64,
    bad: usize,
}

impl Plateau {
    fn step(&mut self, val: f64, lr: f64, cfg: &TrainConfig) -> f64 {
        if val < self.best * (1.0 - cfg.plateau_threshold) {
            self.best = val;
            self.bad = 0;
            return lr;
        }
        self.bad += 1;
        if self.bad > cfg.plateau_patience {
            self.bad = 0;
            return (lr * cfg.plateau_factor).max(cfg.min_lr);
        }
        lr
    }
}

/// Trains `model` in place and returns the per-epoch history.
///
/// Standardization is fitted on `train` first. Minibatches are drawn from a
/// seeded shuffle; a trailing batch of one sample is dropped because batch
/// statistics are undefined for it.
pub fn train(model: &mut Surrogate, train: &[Sample], val: &[Sample], cfg: &TrainConfig) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    if train.len() < 2 {
        return Err(Error::EmptySplit("training split needs at least two samples".into()));
    }
    if val.is_empty() {
        return Err(Error::EmptySplit("validation split".into()));
    }
    model.fit_standardization(train)?;
    let mut rng = stream_rng(cfg.seed, 1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut flat = model.params.trainable_flat();
    let mut adam = Adam::new(flat.len());
    let mut sched = Plateau {
        best: f64::INFINITY,
        bad: 0,
    };
    let mut lr = cfg.lr;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut batch: Vec<&Sample> = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut seen = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            if idx.len() < 2 {
                continue;
            }
            batch.clear();
            batch.extend(idx.iter().map(|&i| &train[i]));
            let (loss, grad, pass) = model.loss_grad_stats(&batch, Mode::Train)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    reason: format!("training loss {loss}"),
                });
            }
            model.update_running_stats(pass, idx.len());
            adam.step(&mut flat, &grad, lr, cfg);
            model.params.set_trainable_flat(&flat)?;
            if !model.params.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    reason: "non-finite parameter after update".into(),
                });
            }
            total += loss * idx.len() as f64;
            seen += idx.len();
        }
        let val_loss = model.mean_loss(val)?;
        if !val_loss.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                reason: format!("validation loss {val_loss}"),
            });
        }
        history.push(EpochRecord {
            epoch,
            train_loss: total / seen as f64,
            val_loss,
            lr,
        });
        lr = sched.step(val_loss, lr, cfg);
    }
    Ok(history)
}

/// Writes `epoch,train_loss,val_loss,lr` rows.
pub fn write_history_csv(history: &[EpochRecord], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "val_loss", "lr"])?;
    for r in history {
        w.write_record([r.epoch.to_string(), r.train_loss.to_string(), r.val_loss.to_string(), r.lr.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Gradient magnitude below which central differences are dominated by
/// rounding; such coordinates are compared in absolute terms.
pub const GRAD_CHECK_FLOOR: f64 = 1e-7;

/// Largest relative deviation between analytic and central-difference
/// gradients over the given coordinates, net of the rounding error of the
/// difference quotient.
pub fn gradient_check(model: &Surrogate, batch: &[Sample], mode: Mode, coords: &[usize], h: f64) -> Result<f64> {
    let (_, grad) = model.loss_and_grad(batch, mode)?;
    let base = model.params.trainable_flat();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for &k in coords {
        let mut x = base.clone();
        x[k] = base[k] + h;
        probe.params.set_trainable_flat(&x)?;
        let up = probe.loss(batch, mode)?;
        x[k] = base[k] - h;
        probe.params.set_trainable_flat(&x)?;
        let down = probe.loss(batch, mode)?;
        let fd = (up - down) / (2.0 * h);
        let rounding = f64::EPSILON * (up.abs() + down.abs()) / (2.0 * h);
        let scale = fd.abs().max(grad[k].abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max(((fd - grad[k]).abs() - rounding).max(0.0) / scale);
    }
    Ok(worst)
}
