//! Dense layers, ReLU MLPs, softmax cross-entropy and Adam, all in `f64` with
//! hand-written backward passes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything that owns a fixed, ordered list of parameter buffers.
///
/// Gradients are stored in a value of the same type, so the two lists line up
/// slice for slice.
pub trait Parameters {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.num_params();
        if flat.len() != expected {
            return Err(Error::Dimension { context: "flat parameters", expected, actual: flat.len() });
        }
        let mut offset = 0;
        for slice in self.param_slices_mut() {
            slice.copy_from_slice(&flat[offset..offset + slice.len()]);
            offset += slice.len();
        }
        Ok(())
    }

    fn fill(&mut self, value: f64) {
        for slice in self.param_slices_mut() {
            slice.fill(value);
        }
    }

    fn l2_norm(&self) -> f64 {
        self.param_slices().iter().flat_map(|s| s.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    fn all_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasMode {
    WithBias,
    #[default]
    BiasFree,
}

/// Fully connected layer `y = W x + b` with `W` stored row-major `[out][in]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Option<Vec<f64>>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize, bias: bool) -> Self {
        Dense { in_dim, out_dim, w: vec![0.0; in_dim * out_dim], b: bias.then(|| vec![0.0; out_dim]) }
    }

    /// Uniform fan-based init in `±sqrt(6 / (in + out))`; biases start at zero.
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, bias: bool, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = (0..in_dim * out_dim).map(|_| rng.random_range(-limit..limit)).collect();
        Dense { in_dim, out_dim, w, b: bias.then(|| vec![0.0; out_dim]) }
    }

    pub fn identity(dim: usize, bias: bool) -> Self {
        let mut d = Dense::zeros(dim, dim, bias);
        for i in 0..dim {
            d.w[i * dim + i] = 1.0;
        }
        d
    }

    pub fn has_bias(&self) -> bool {
        self.b.is_some()
    }

    pub fn zeros_like(&self) -> Self {
        Dense::zeros(self.in_dim, self.out_dim, self.has_bias())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::Dimension { context: "dense input", expected: self.in_dim, actual: x.len() });
        }
        let mut y = vec![0.0; self.out_dim];
        self.forward_into(x, &mut y);
        Ok(y)
    }

    /// Unchecked forward; `x.len() == in_dim` and `y.len() == out_dim`.
    pub(crate) fn forward_into(&self, x: &[f64], y: &mut [f64]) {
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
            if let Some(b) = &self.b {
                acc += b[o];
            }
            *yo = acc;
        }
    }

    /// Accumulates `dW += dy x^T`, `db += dy` into `grad` and, if requested,
    /// writes `W^T dy` into `dx`.
    pub(crate) fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense, dx: Option<&mut [f64]>) {
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &mut grad.w[o * self.in_dim..(o + 1) * self.in_dim];
            for (r, &xi) in row.iter_mut().zip(x) {
                *r += g * xi;
            }
        }
        if let (Some(gb), Some(_)) = (&mut grad.b, &self.b) {
            for (gb, &g) in gb.iter_mut().zip(dy) {
                *gb += g;
            }
        }
        if let Some(dx) = dx {
            dx.fill(0.0);
            for (o, &g) in dy.iter().enumerate() {
                let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
                for (d, &w) in dx.iter_mut().zip(row) {
                    *d += w * g;
                }
            }
        }
    }
}

impl Parameters for Dense {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![&self.w];
        if let Some(b) = &self.b {
            v.push(b);
        }
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![&mut self.w];
        if let Some(b) = &mut self.b {
            v.push(b);
        }
        v
    }
}

/// Dense layers with ReLU between them and identity at the output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub bias_mode: BiasMode,
}

/// Activations saved by [`Mlp::forward_cached`] for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct MlpCache {
    /// Input to each layer (post-ReLU for every layer but the first).
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer; the last entry is the MLP output.
    pub pre: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Mlp {
    /// `dims = [in, hidden..., out]`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], bias_mode: BiasMode, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::validation("mlp dims", format!("need >= 2 positive sizes, got {dims:?}")));
        }
        let bias = bias_mode == BiasMode::WithBias;
        let layers = dims.windows(2).map(|w| Dense::glorot(w[0], w[1], bias, rng)).collect();
        Ok(Mlp { layers, bias_mode })
    }

    pub fn from_layers(layers: Vec<Dense>, bias_mode: BiasMode) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::validation("mlp layers", "at least one layer required"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Dimension { context: "mlp layer chain", expected: pair[0].out_dim, actual: pair[1].in_dim });
            }
        }
        let want_bias = bias_mode == BiasMode::WithBias;
        if layers.iter().any(|l| l.has_bias() != want_bias) {
            return Err(Error::validation("bias_mode", "layer biases disagree with bias_mode"));
        }
        Ok(Mlp { layers, bias_mode })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn zeros_like(&self) -> Self {
        Mlp { layers: self.layers.iter().map(Dense::zeros_like).collect(), bias_mode: self.bias_mode }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.pre.pop().unwrap_or_default())
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<MlpCache> {
        if x.len() != self.in_dim() {
            return Err(Error::Dimension { context: "mlp input", expected: self.in_dim(), actual: x.len() });
        }
        let mut cache = MlpCache { inputs: Vec::with_capacity(self.layers.len()), pre: Vec::with_capacity(self.layers.len()) };
        let mut input = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.out_dim];
            layer.forward_into(&input, &mut out);
            let next = if i + 1 < self.layers.len() { out.iter().map(|&v| v.max(0.0)).collect() } else { Vec::new() };
            cache.inputs.push(std::mem::replace(&mut input, next));
            cache.pre.push(out);
        }
        Ok(cache)
    }

    /// Backpropagates `d_out` (gradient w.r.t. the MLP output) and accumulates
    /// parameter gradients into `grad`.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64], grad: &mut Mlp) {
        let mut delta = d_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if i == 0 {
                layer.backward(&cache.inputs[0], &delta, &mut grad.layers[0], None);
            } else {
                let mut dx = vec![0.0; layer.in_dim];
                layer.backward(&cache.inputs[i], &delta, &mut grad.layers[i], Some(&mut dx));
                // ReLU': 1 where the previous pre-activation is strictly positive.
                for (d, &p) in dx.iter_mut().zip(&cache.pre[i - 1]) {
                    if p <= 0.0 {
                        *d = 0.0;
                    }
                }
                delta = dx;
            }
        }
    }
}

impl Parameters for Mlp {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.param_slices()).collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.param_slices_mut()).collect()
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `log(sum(exp(z))) - z[label]`, computed stably from logits.
pub fn cross_entropy_from_logits(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Probability floor used by [`cross_entropy`].
pub const CE_EPS: f64 = 1e-300;

/// `-ln(probs[label])`, with the probability floored at [`CE_EPS`]. The flag
/// reports whether the floor was hit.
pub fn cross_entropy(probs: &[f64], label: usize) -> (f64, bool) {
    let p = probs[label];
    if p < CE_EPS {
        (-CE_EPS.ln(), true)
    } else {
        (-p.ln(), false)
    }
}

/// Mean of [`cross_entropy`] over a batch.
pub fn mean_cross_entropy(probs: &[Vec<f64>], labels: &[usize]) -> f64 {
    let total: f64 = probs.iter().zip(labels).map(|(p, &y)| cross_entropy(p, y).0).sum();
    total / probs.len() as f64
}

/// Mean softmax cross-entropy of `mlp` used directly as a classifier, and its
/// gradient.
pub fn classifier_gradients(mlp: &Mlp, batch: &[(&[f64], usize)]) -> Result<(f64, Mlp)> {
    if batch.is_empty() {
        return Err(Error::validation("batch", "must be non-empty"));
    }
    let mut grad = mlp.zeros_like();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (i, &(x, y)) in batch.iter().enumerate() {
        let cache = mlp.forward_cached(x)?;
        let logits = cache.output();
        let l = cross_entropy_from_logits(logits, y);
        if !l.is_finite() {
            return Err(Error::NonFiniteLoss { sample_id: i });
        }
        loss += l * scale;
        let mut d = softmax(logits);
        d[y] -= 1.0;
        d.iter_mut().for_each(|v| *v *= scale);
        mlp.backward(&cache, &d, &mut grad);
    }
    Ok((loss, grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::validation("lr", "must be finite and non-negative"));
        }
        for (f, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::validation(f, "must lie in (0, 1)"));
            }
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::validation("eps", "must be positive"));
        }
        Ok(())
    }
}

/// Adam with bias correction. Moments are kept flat, in the order given by
/// [`Parameters::param_slices`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        AdamState { config, t: 0, m: vec![0.0; num_params], v: vec![0.0; num_params] }
    }

    pub fn step<P: Parameters + ?Sized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let n = params.num_params();
        if grads.num_params() != n || self.m.len() != n {
            return Err(Error::Dimension { context: "adam step", expected: self.m.len(), actual: n });
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powf(self.t as f64);
        let bc2 = 1.0 - beta2.powf(self.t as f64);
        let mut k = 0;
        for (p, g) in params.param_slices_mut().into_iter().zip(grads.param_slices()) {
            for (pi, &gi) in p.iter_mut().zip(g) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = beta1 * *m + (1.0 - beta1) * gi;
                *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *pi -= lr * m_hat / (v_hat.sqrt() + eps);
                k += 1;
            }
        }
        Ok(())
    }
}
