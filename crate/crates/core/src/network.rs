//! Latent Hamiltonian neural network.
//!
//! A fully connected network maps `z = [q; p]` (width `2d`) to `d` latent
//! outputs `λ`; the predicted Hamiltonian is `H_θ(z) = Σ λ_i`. Input gradients
//! are computed by a reverse sweep, and the gradient of the physics loss with
//! respect to the parameters (which itself involves `∇_z H_θ`) is obtained by
//! differentiating a forward tangent sweep, so both are exact.

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::train::TrainingRecord;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    #[default]
    Sine,
    /// Piecewise linear; its input gradients are piecewise constant, so it is
    /// only useful for ablations.
    Relu,
    /// No nonlinearity. Used to check gradients against closed forms.
    Identity,
}

impl Activation {
    #[inline]
    fn value(self, x: f64) -> f64 {
        match self {
            Self::Tanh => x.tanh(),
            Self::Sine => x.sin(),
            Self::Relu => x.max(0.0),
            Self::Identity => x,
        }
    }

    #[inline]
    fn first(self, x: f64) -> f64 {
        match self {
            Self::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Self::Sine => x.cos(),
            Self::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Identity => 1.0,
        }
    }

    #[inline]
    fn second(self, x: f64) -> f64 {
        match self {
            Self::Tanh => {
                let t = x.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Self::Sine => -x.sin(),
            Self::Relu | Self::Identity => 0.0,
        }
    }
}

/// One affine layer; `weight` is `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Gradient of the loss with respect to every weight and bias. Same shapes
/// as the network it was computed for.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterGradient {
    pub layers: Vec<Dense>,
}

impl ParameterGradient {
    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn max_abs(&self) -> f64 {
        self.to_flat().into_iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn flatten(layers: &[Dense]) -> Vec<f64> {
    let mut out = Vec::with_capacity(layers.iter().map(Dense::n_params).sum());
    for l in layers {
        out.extend(l.weight.iter());
        out.extend(l.bias.iter());
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lhnn {
    layers: Vec<Dense>,
    activation: Activation,
    dim: usize,
}

/// Activations kept from a batched forward pass.
struct ForwardCache {
    /// `u_0 .. u_P`, each `batch × width`.
    post: Vec<Array2<f64>>,
    /// `a_0 .. a_{P-1}`.
    pre: Vec<Array2<f64>>,
}

impl Lhnn {
    /// Random network for target dimension `dim`, with the given hidden
    /// widths. Weights are uniform in `±1/√fan_in`, biases likewise.
    pub fn new(dim: usize, hidden: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let sizes = Self::sizes_for(dim, hidden);
        if dim == 0 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidConfig("layer sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let mut layer = Dense::zeros(w[0], w[1]);
                layer
                    .weight
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(-bound..bound));
                layer
                    .bias
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(-bound..bound));
                layer
            })
            .collect();
        Ok(Self {
            layers,
            activation,
            dim,
        })
    }

    pub fn zeros(dim: usize, hidden: &[usize], activation: Activation) -> Self {
        let sizes = Self::sizes_for(dim, hidden);
        Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            activation,
            dim,
        }
    }

    /// Wraps explicit layers. The first layer must take `2d` inputs and the
    /// last must emit `d`; intermediate widths must chain.
    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        let last = layers.last().ok_or(Error::Empty("network layers"))?;
        let dim = last.outputs();
        check_dim("network input width", 2 * dim, layers[0].inputs())?;
        for w in layers.windows(2) {
            check_dim("network layer chaining", w[0].outputs(), w[1].inputs())?;
        }
        for l in &layers {
            check_dim("network bias", l.outputs(), l.bias.len())?;
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("network parameters"));
            }
        }
        Ok(Self {
            layers,
            activation,
            dim,
        })
    }

    pub fn sizes_for(dim: usize, hidden: &[usize]) -> Vec<usize> {
        let mut sizes = vec![2 * dim];
        sizes.extend_from_slice(hidden);
        sizes.push(dim);
        sizes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs()];
        sizes.extend(self.layers.iter().map(Dense::outputs));
        sizes
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    /// Overwrites all parameters from a flat vector in `to_flat` order.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_dim("flat parameter vector", self.n_params(), flat.len())?;
        let mut it = flat.iter();
        for l in &mut self.layers {
            l.weight
                .iter_mut()
                .chain(l.bias.iter_mut())
                .zip(&mut it)
                .for_each(|(dst, src)| *dst = *src);
        }
        Ok(())
    }

    pub(crate) fn apply_update(&mut self, step: impl Fn(usize, &mut f64)) {
        let mut idx = 0;
        for l in &mut self.layers {
            for v in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                step(idx, v);
                idx += 1;
            }
        }
    }

    fn hidden(&self) -> &[Dense] {
        &self.layers[..self.layers.len() - 1]
    }

    fn output(&self) -> &Dense {
        self.layers.last().expect("network has at least one layer")
    }

    /// `Σ_i W_P[i, :]`: the gradient of `H_θ` with respect to the last
    /// hidden activations.
    fn output_sum(&self) -> Array1<f64> {
        self.output().weight.sum_axis(Axis(0))
    }

    fn check_input(&self, z: &[f64]) -> Result<()> {
        check_dim("network input", 2 * self.dim, z.len())
    }

    /// Latent outputs `λ` for input `z = [q; p]`.
    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_input(z)?;
        let mut u = ArrayView1::from(z).to_owned();
        for layer in self.hidden() {
            let mut a = layer.weight.dot(&u) + &layer.bias;
            a.mapv_inplace(|x| self.activation.value(x));
            u = a;
        }
        let out = self.output();
        Ok((out.weight.dot(&u) + &out.bias).to_vec())
    }

    /// `H_θ(z) = Σ λ_i`.
    pub fn hamiltonian_estimate(&self, z: &[f64]) -> Result<f64> {
        Ok(self.forward(z)?.iter().sum())
    }

    /// Exact `∇_z H_θ`: first `d` entries are `∂H_θ/∂q`, last `d` are `∂H_θ/∂p`.
    pub fn input_gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_input(z)?;
        let mut pre = Vec::with_capacity(self.hidden().len());
        let mut u = ArrayView1::from(z).to_owned();
        for layer in self.hidden() {
            let a = layer.weight.dot(&u) + &layer.bias;
            u = a.mapv(|x| self.activation.value(x));
            pre.push(a);
        }
        let mut g = self.output_sum();
        for (layer, a) in self.hidden().iter().zip(&pre).rev() {
            Zip::from(&mut g)
                .and(a)
                .for_each(|gi, &ai| *gi *= self.activation.first(ai));
            g = layer.weight.t().dot(&g);
        }
        Ok(g.to_vec())
    }

    fn forward_batch(&self, z: Array2<f64>) -> ForwardCache {
        let mut post = vec![z];
        let mut pre = Vec::with_capacity(self.hidden().len());
        for layer in self.hidden() {
            let a = post.last().unwrap().dot(&layer.weight.t()) + &layer.bias;
            post.push(a.mapv(|x| self.activation.value(x)));
            pre.push(a);
        }
        ForwardCache { post, pre }
    }

    /// Batched `∇_z H_θ`, `batch × 2d`.
    fn input_gradient_batch(&self, cache: &ForwardCache) -> Array2<f64> {
        let batch = cache.post[0].nrows();
        let c = self.output_sum();
        let mut g = Array2::from_shape_fn((batch, c.len()), |(_, j)| c[j]);
        for (layer, a) in self.hidden().iter().zip(&cache.pre).rev() {
            Zip::from(&mut g)
                .and(a)
                .for_each(|gi, &ai| *gi *= self.activation.first(ai));
            g = g.dot(&layer.weight);
        }
        g
    }

    fn batch_arrays(&self, batch: &[TrainingRecord]) -> Result<(Array2<f64>, Array2<f64>)> {
        if batch.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        let d = self.dim;
        let mut z = Array2::zeros((batch.len(), 2 * d));
        let mut dqdt = Array2::zeros((batch.len(), d));
        let mut dpdt = Array2::zeros((batch.len(), d));
        for (b, rec) in batch.iter().enumerate() {
            check_dim("training record", d, rec.z.dim())?;
            check_dim("training record dq/dt", d, rec.dq_dt.len())?;
            check_dim("training record dp/dt", d, rec.dp_dt.len())?;
            for i in 0..d {
                z[[b, i]] = rec.z.q[i];
                z[[b, d + i]] = rec.z.p[i];
                dqdt[[b, i]] = rec.dq_dt[i];
                dpdt[[b, i]] = rec.dp_dt[i];
            }
        }
        // residual targets laid out like ∇_z H: [-dp/dt ; dq/dt]
        let mut target = Array2::zeros((batch.len(), 2 * d));
        target.slice_mut(ndarray::s![.., ..d]).assign(&(-&dpdt));
        target.slice_mut(ndarray::s![.., d..]).assign(&dqdt);
        Ok((z, target))
    }

    /// Mean over the batch of `‖∂H_θ/∂p − dq/dt‖² + ‖−∂H_θ/∂q − dp/dt‖²`.
    pub fn loss(&self, batch: &[TrainingRecord]) -> Result<f64> {
        let (z, target) = self.batch_arrays(batch)?;
        let cache = self.forward_batch(z);
        let g = self.input_gradient_batch(&cache);
        // ‖−g_q − dp/dt‖ = ‖g_q − (−dp/dt)‖, so both halves are g − target
        let resid = g - target;
        Ok(resid.iter().map(|r| r * r).sum::<f64>() / batch.len() as f64)
    }

    pub fn loss_gradient(&self, batch: &[TrainingRecord]) -> Result<ParameterGradient> {
        self.loss_and_gradient(batch).map(|(_, g)| g)
    }

    /// Loss and its exact parameter gradient.
    ///
    /// With `v = ∂L/∂(∇_z H_θ)` held fixed, `∂L/∂θ = ∇_θ (vᵀ ∇_z H_θ)`, and
    /// `vᵀ ∇_z H_θ` is the directional derivative of `H_θ` along `v`. That
    /// derivative is computed by a forward tangent sweep and then
    /// differentiated in reverse with respect to the parameters.
    pub fn loss_and_gradient(&self, batch: &[TrainingRecord]) -> Result<(f64, ParameterGradient)> {
        let n = batch.len() as f64;
        let (z, target) = self.batch_arrays(batch)?;
        let cache = self.forward_batch(z);
        let g = self.input_gradient_batch(&cache);
        let resid = g - target;
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / n;
        let v = resid * (2.0 / n);

        // tangent sweep: u̇_0 = v, ȧ_l = W_l u̇_l, u̇_{l+1} = φ'(a_l) ȧ_l
        let act = self.activation;
        let mut tan_post = vec![v];
        let mut tan_pre = Vec::with_capacity(self.hidden().len());
        for (layer, a) in self.hidden().iter().zip(&cache.pre) {
            let ad = tan_post.last().unwrap().dot(&layer.weight.t());
            let mut ud = ad.clone();
            Zip::from(&mut ud)
                .and(a)
                .for_each(|u, &ai| *u *= act.first(ai));
            tan_post.push(ud);
            tan_pre.push(ad);
        }

        // reverse sweep of S = Σ_b 1ᵀ W_P u̇_P
        let p = self.hidden().len();
        let mut grads: Vec<Dense> = self
            .layers
            .iter()
            .map(|l| Dense::zeros(l.inputs(), l.outputs()))
            .collect();
        let ud_sum = tan_post[p].sum_axis(Axis(0));
        for mut row in grads[p].weight.rows_mut() {
            row.assign(&ud_sum);
        }

        let batch_n = batch.len();
        let c = self.output_sum();
        let mut bar_ud = Array2::from_shape_fn((batch_n, c.len()), |(_, j)| c[j]);
        let mut bar_u: Array2<f64> = Array2::zeros((batch_n, c.len()));
        for l in (0..p).rev() {
            let a = &cache.pre[l];
            let mut bar_ad = bar_ud.clone();
            Zip::from(&mut bar_ad)
                .and(a)
                .for_each(|x, &ai| *x *= act.first(ai));
            let mut bar_a = Array2::zeros(a.raw_dim());
            Zip::from(&mut bar_a)
                .and(a)
                .and(&tan_pre[l])
                .and(&bar_ud)
                .and(&bar_u)
                .for_each(|out, &ai, &adi, &budi, &bui| {
                    *out = act.second(ai) * adi * budi + act.first(ai) * bui;
                });
            grads[l].weight = bar_ad.t().dot(&tan_post[l]) + bar_a.t().dot(&cache.post[l]);
            grads[l].bias = bar_a.sum_axis(Axis(0));
            if l > 0 {
                let w = &self.layers[l].weight;
                bar_ud = bar_ad.dot(w);
                bar_u = bar_a.dot(w);
            }
        }
        Ok((loss, ParameterGradient { layers: grads }))
    }
}
