//! Dense Q-network numerics: forward evaluation, exact parameter gradients,
//! exact input gradients, and optimizer updates.
//!
//! Layers are either plain dense layers or noisy dense layers whose effective
//! parameters are `mu + sigma ⊙ eps` for a held factorized noise sample. Both
//! kinds run through the same matvec kernels, so a noisy layer with sigma
//! pinned to zero is bit-identical to the plain layer with weights `mu`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative at `z`; the ReLU subgradient at zero is taken as 0.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Plain dense layer: `act(W x + b)`, weights `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub(crate) weights: Matrix,
    pub(crate) biases: Vec<f64>,
    pub(crate) activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, biases: Vec<f64>, activation: Activation) -> Result<Self> {
        if biases.len() != weights.rows() {
            return Err(Error::RejectedInput(format!(
                "bias length {} does not match {} output rows",
                biases.len(),
                weights.rows()
            )));
        }
        Ok(Self { weights, biases, activation })
    }
}

/// One factorized noise sample for a noisy layer, shaped like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNoise {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

/// Noisy dense layer with learnable `(mu, sigma)` and a held noise sample.
///
/// The effective parameters `mu + sigma ⊙ eps` are cached and refreshed on
/// every resample and every parameter update. Constructing the layer with
/// `sigma ≡ 0` disables parameter noise entirely: the layer forwards its mean
/// parameters without requiring a noise sample, and sigma stays pinned at
/// zero across updates.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyDenseLayer {
    pub(crate) mu_weights: Matrix,
    pub(crate) sigma_weights: Matrix,
    pub(crate) mu_bias: Vec<f64>,
    pub(crate) sigma_bias: Vec<f64>,
    pub(crate) activation: Activation,
    pub(crate) noise: Option<LayerNoise>,
    pub(crate) noise_disabled: bool,
    effective_weights: Option<Matrix>,
    effective_bias: Option<Vec<f64>>,
}

impl NoisyDenseLayer {
    pub fn new(
        mu_weights: Matrix,
        sigma_weights: Matrix,
        mu_bias: Vec<f64>,
        sigma_bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if !mu_weights.same_shape(&sigma_weights)
            || mu_bias.len() != mu_weights.rows()
            || sigma_bias.len() != mu_bias.len()
        {
            return Err(Error::RejectedInput("mu/sigma shapes do not match".into()));
        }
        let noise_disabled = sigma_weights.as_slice().iter().all(|&s| s == 0.0)
            && sigma_bias.iter().all(|&s| s == 0.0);
        let mut layer = Self {
            mu_weights,
            sigma_weights,
            mu_bias,
            sigma_bias,
            activation,
            noise: None,
            noise_disabled,
            effective_weights: None,
            effective_bias: None,
        };
        layer.refresh_effective();
        Ok(layer)
    }

    /// Installs a fresh noise sample and recomputes the effective parameters.
    pub fn set_noise(&mut self, noise: LayerNoise) -> Result<()> {
        if !noise.weights.same_shape(&self.mu_weights) || noise.biases.len() != self.mu_bias.len()
        {
            return Err(Error::RejectedInput("noise shape mismatch".into()));
        }
        self.noise = Some(noise);
        self.refresh_effective();
        Ok(())
    }

    /// `theta = mu + sigma ⊙ eps`, a pure function of the layer state.
    pub fn effective_parameters(&self) -> Result<(&Matrix, &[f64])> {
        match (&self.effective_weights, &self.effective_bias) {
            (Some(w), Some(b)) => Ok((w, b)),
            _ => Err(Error::ProtocolViolation(
                "noisy layer has no noise sample; resample before forwarding".into(),
            )),
        }
    }

    fn refresh_effective(&mut self) {
        if self.noise_disabled {
            self.effective_weights = Some(self.mu_weights.clone());
            self.effective_bias = Some(self.mu_bias.clone());
            return;
        }
        let Some(noise) = &self.noise else {
            self.effective_weights = None;
            self.effective_bias = None;
            return;
        };
        let mut w = self.mu_weights.clone();
        for ((wv, sv), nv) in w
            .as_mut_slice()
            .iter_mut()
            .zip(self.sigma_weights.as_slice())
            .zip(noise.weights.as_slice())
        {
            *wv += sv * nv;
        }
        let b: Vec<f64> = self
            .mu_bias
            .iter()
            .zip(&self.sigma_bias)
            .zip(&noise.biases)
            .map(|((m, s), n)| m + s * n)
            .collect();
        self.effective_weights = Some(w);
        self.effective_bias = Some(b);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Noisy(NoisyDenseLayer),
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        match self {
            Layer::Dense(l) => l.weights.cols(),
            Layer::Noisy(l) => l.mu_weights.cols(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Layer::Dense(l) => l.weights.rows(),
            Layer::Noisy(l) => l.mu_weights.rows(),
        }
    }

    pub fn activation(&self) -> Activation {
        match self {
            Layer::Dense(l) => l.activation,
            Layer::Noisy(l) => l.activation,
        }
    }

    fn effective(&self) -> Result<(&Matrix, &[f64])> {
        match self {
            Layer::Dense(l) => Ok((&l.weights, &l.biases)),
            Layer::Noisy(l) => l.effective_parameters(),
        }
    }
}

/// Per-layer gradients, shapes mirroring the network.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerGradient {
    Dense { weights: Matrix, biases: Vec<f64> },
    Noisy { mu_weights: Matrix, sigma_weights: Matrix, mu_bias: Vec<f64>, sigma_bias: Vec<f64> },
}

impl LayerGradient {
    fn zeros_like(layer: &Layer) -> Self {
        let (rows, cols) = (layer.out_dim(), layer.in_dim());
        match layer {
            Layer::Dense(_) => LayerGradient::Dense {
                weights: Matrix::zeros(rows, cols),
                biases: vec![0.0; rows],
            },
            Layer::Noisy(_) => LayerGradient::Noisy {
                mu_weights: Matrix::zeros(rows, cols),
                sigma_weights: Matrix::zeros(rows, cols),
                mu_bias: vec![0.0; rows],
                sigma_bias: vec![0.0; rows],
            },
        }
    }

    fn tensors(&self) -> Vec<&[f64]> {
        match self {
            LayerGradient::Dense { weights, biases } => vec![weights.as_slice(), biases],
            LayerGradient::Noisy { mu_weights, sigma_weights, mu_bias, sigma_bias } => vec![
                mu_weights.as_slice(),
                sigma_weights.as_slice(),
                mu_bias,
                sigma_bias,
            ],
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            LayerGradient::Dense { weights, biases } => {
                vec![weights.as_mut_slice(), biases.as_mut_slice()]
            }
            LayerGradient::Noisy { mu_weights, sigma_weights, mu_bias, sigma_bias } => vec![
                mu_weights.as_mut_slice(),
                sigma_weights.as_mut_slice(),
                mu_bias.as_mut_slice(),
                sigma_bias.as_mut_slice(),
            ],
        }
    }
}

/// Gradients for every parameter of a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGradient>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        Self { layers: net.layers.iter().map(LayerGradient::zeros_like).collect() }
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (ta, tb) in a.tensors_mut().into_iter().zip(b.tensors()) {
                for (x, y) in ta.iter_mut().zip(tb) {
                    *x += y;
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for layer in &mut self.layers {
            for t in layer.tensors_mut() {
                for x in t {
                    *x *= s;
                }
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        let mut acc = 0.0;
        for layer in &self.layers {
            for t in layer.tensors() {
                for x in t {
                    acc += x * x;
                }
            }
        }
        acc.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.tensors().into_iter().all(|t| t.iter().all(|x| x.is_finite())))
    }
}

/// Scalar objective for input-gradient computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputLoss {
    /// The raw Q-value of one action.
    ActionValue(usize),
    /// Softmax cross-entropy of the Q-vector against a fixed action.
    CrossEntropy { target: usize },
    /// Softmax cross-entropy against the greedy action of the evaluated
    /// input (the non-targeted attack objective).
    GreedyCrossEntropy,
}

/// Index of the maximum entry, ties broken by lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(q: &[f64]) -> Vec<f64> {
    let m = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = q.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// A layered Q-function. Layer dimensions chain from `input_dim` to
/// `output_dim` (one Q-value per action).
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub(crate) layers: Vec<Layer>,
    input_dim: usize,
    output_dim: usize,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::RejectedInput("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::RejectedInput(format!(
                    "layer dims do not chain: {} -> {}",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
        }
        let input_dim = layers[0].in_dim();
        let output_dim = layers[layers.len() - 1].out_dim();
        Ok(Self { layers, input_dim, output_dim })
    }

    /// MLP with ReLU hidden layers and an identity output layer.
    ///
    /// Weights and biases are drawn uniformly from
    /// `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`. When `noisy` is set, every layer
    /// is a noisy dense layer with `sigma = sigma_scale / sqrt(fan_in)`;
    /// `sigma_scale = 0` builds noise-disabled layers.
    pub fn mlp(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        noisy: bool,
        sigma_scale: f64,
        rng: &mut crate::rng::RngStream,
    ) -> Result<Self> {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (idx, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weights =
                Matrix::from_fn(fan_out, fan_in, |_, _| rng.uniform_in(-bound, bound));
            let biases: Vec<f64> = (0..fan_out).map(|_| rng.uniform_in(-bound, bound)).collect();
            let activation = if idx + 1 == dims.len() - 1 {
                Activation::Identity
            } else {
                Activation::Relu
            };
            if noisy {
                let sigma = sigma_scale / (fan_in as f64).sqrt();
                let sigma_weights = Matrix::from_fn(fan_out, fan_in, |_, _| sigma);
                let sigma_bias = vec![sigma; fan_out];
                layers.push(Layer::Noisy(NoisyDenseLayer::new(
                    weights,
                    sigma_weights,
                    biases,
                    sigma_bias,
                    activation,
                )?));
            } else {
                layers.push(Layer::Dense(DenseLayer::new(weights, biases, activation)?));
            }
        }
        Self::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn has_noisy_layers(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::Noisy(_)))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::RejectedInput(format!(
                "input length {} does not match input_dim {}",
                x.len(),
                self.input_dim
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::RejectedInput("non-finite input entry".into()));
        }
        Ok(())
    }

    /// Q-values for `x`, one per action.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut h = x.to_vec();
        for layer in &self.layers {
            let (w, b) = layer.effective()?;
            let mut z = w.matvec(&h);
            for (zv, bv) in z.iter_mut().zip(b) {
                *zv += bv;
            }
            let act = layer.activation();
            for zv in &mut z {
                *zv = act.apply(*zv);
            }
            h = z;
        }
        Ok(h)
    }

    /// Forward pass keeping per-layer inputs and pre-activations.
    fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_acts = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let (w, b) = layer.effective()?;
            let mut z = w.matvec(&h);
            for (zv, bv) in z.iter_mut().zip(b) {
                *zv += bv;
            }
            inputs.push(h);
            let act = layer.activation();
            h = z.iter().map(|&zv| act.apply(zv)).collect();
            pre_acts.push(z);
        }
        Ok(Trace { inputs, pre_acts, output: h })
    }

    /// Backward pass from an output-space gradient `d_out = dL/dq`.
    ///
    /// Accumulates parameter gradients into `acc` and returns `dL/dx`.
    fn backward_into(&self, trace: &Trace, d_out: &[f64], acc: &mut GradientSet) -> Vec<f64> {
        let mut d_h = d_out.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let z = &trace.pre_acts[idx];
            let h_in = &trace.inputs[idx];
            let act = layer.activation();
            let d_z: Vec<f64> =
                d_h.iter().zip(z).map(|(dv, zv)| dv * act.derivative(*zv)).collect();
            match (&self.layers[idx], &mut acc.layers[idx]) {
                (Layer::Dense(_), LayerGradient::Dense { weights, biases }) => {
                    weights.add_outer_scaled(&d_z, h_in, 1.0);
                    for (b, d) in biases.iter_mut().zip(&d_z) {
                        *b += d;
                    }
                }
                (
                    Layer::Noisy(noisy),
                    LayerGradient::Noisy { mu_weights, sigma_weights, mu_bias, sigma_bias },
                ) => {
                    // d theta = d_z ⊗ h; d mu = d theta; d sigma = d theta ⊙ eps
                    mu_weights.add_outer_scaled(&d_z, h_in, 1.0);
                    let noise = noisy.noise.as_ref();
                    let cols = sigma_weights.cols();
                    if let Some(noise) = noise {
                        let sw = sigma_weights.as_mut_slice();
                        let nw = noise.weights.as_slice();
                        for (i, dzi) in d_z.iter().enumerate() {
                            if *dzi == 0.0 {
                                continue;
                            }
                            let row = &mut sw[i * cols..(i + 1) * cols];
                            let nrow = &nw[i * cols..(i + 1) * cols];
                            for ((s, hv), nv) in row.iter_mut().zip(h_in).zip(nrow) {
                                *s += dzi * hv * nv;
                            }
                        }
                        for ((sb, d), nb) in sigma_bias.iter_mut().zip(&d_z).zip(&noise.biases) {
                            *sb += d * nb;
                        }
                    }
                    for (b, d) in mu_bias.iter_mut().zip(&d_z) {
                        *b += d;
                    }
                }
                _ => unreachable!("gradient set shape mirrors the network"),
            }
            // dL/dh_in = W^T d_z, using the effective weights
            let (w, _) = self.layers[idx].effective().expect("trace implies effective params");
            d_h = w.matvec_transposed(&d_z);
        }
        d_h
    }

    /// Gradient of the squared TD error `(target - Q(x, action))^2` with
    /// respect to every parameter, for one sample.
    pub fn param_gradients(
        &self,
        x: &[f64],
        action: usize,
        target: f64,
    ) -> Result<GradientSet> {
        let mut acc = GradientSet::zeros_like(self);
        self.accumulate_td_gradient(x, action, target, &mut acc)?;
        if !acc.is_finite() {
            return Err(Error::NumericOverflow("non-finite parameter gradient".into()));
        }
        Ok(acc)
    }

    /// Adds the gradient of one squared-TD-error sample into `acc` and
    /// returns the sample's loss.
    pub(crate) fn accumulate_td_gradient(
        &self,
        x: &[f64],
        action: usize,
        target: f64,
        acc: &mut GradientSet,
    ) -> Result<f64> {
        self.check_input(x)?;
        if action >= self.output_dim {
            return Err(Error::RejectedInput(format!(
                "action {action} out of range for {} outputs",
                self.output_dim
            )));
        }
        if !target.is_finite() {
            return Err(Error::RejectedInput("non-finite target".into()));
        }
        let trace = self.forward_trace(x)?;
        let residual = target - trace.output[action];
        if !residual.is_finite() {
            return Err(Error::NumericOverflow("non-finite TD residual".into()));
        }
        // L = (t - q_a)^2  =>  dL/dq_a = -2 (t - q_a), zero elsewhere.
        let mut d_out = vec![0.0; self.output_dim];
        d_out[action] = -2.0 * residual;
        self.backward_into(&trace, &d_out, acc);
        Ok(residual * residual)
    }

    /// Scalar value of an [`InputLoss`] at `x` (used by attack crafting and
    /// by finite-difference oracles).
    pub fn loss_value(&self, x: &[f64], loss: InputLoss) -> Result<f64> {
        let q = self.forward(x)?;
        Ok(match loss {
            InputLoss::ActionValue(a) => q[a],
            InputLoss::CrossEntropy { target } => {
                let p = softmax(&q);
                -p[target].ln()
            }
            InputLoss::GreedyCrossEntropy => {
                let p = softmax(&q);
                -p[argmax(&q)].ln()
            }
        })
    }

    /// Exact gradient of the scalar `loss` with respect to the input.
    pub fn input_gradient(&self, x: &[f64], loss: InputLoss) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let trace = self.forward_trace(x)?;
        let q = &trace.output;
        let d_out: Vec<f64> = match loss {
            InputLoss::ActionValue(a) => {
                if a >= self.output_dim {
                    return Err(Error::RejectedInput(format!(
                        "action {a} out of range for {} outputs",
                        self.output_dim
                    )));
                }
                (0..self.output_dim).map(|i| if i == a { 1.0 } else { 0.0 }).collect()
            }
            InputLoss::CrossEntropy { target } | InputLoss::GreedyCrossEntropy => {
                let target = match loss {
                    InputLoss::CrossEntropy { target } => target,
                    _ => argmax(q),
                };
                if target >= self.output_dim {
                    return Err(Error::RejectedInput(format!(
                        "action {target} out of range for {} outputs",
                        self.output_dim
                    )));
                }
                // d(-ln softmax(q)[t])/dq_j = p_j - 1{j == t}
                let p = softmax(q);
                p.iter()
                    .enumerate()
                    .map(|(j, pj)| pj - if j == target { 1.0 } else { 0.0 })
                    .collect()
            }
        };
        let mut scratch = GradientSet::zeros_like(self);
        let grad = self.backward_into(&trace, &d_out, &mut scratch);
        if !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::NumericOverflow("non-finite input gradient".into()));
        }
        Ok(grad)
    }

    /// Plain SGD update: every parameter `p` becomes `p - lr * grad(p)`.
    ///
    /// Noisy layers update both mu and sigma from their respective gradients,
    /// except noise-disabled layers, whose sigma stays pinned at zero.
    pub fn apply_update(&mut self, grads: &GradientSet, lr: f64) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::RejectedInput("gradient set does not mirror network".into()));
        }
        for (layer, grad) in self.layers.iter_mut().zip(&grads.layers) {
            match (layer, grad) {
                (Layer::Dense(l), LayerGradient::Dense { weights, biases }) => {
                    if !l.weights.same_shape(weights) || l.biases.len() != biases.len() {
                        return Err(Error::RejectedInput("gradient shape mismatch".into()));
                    }
                    for (w, g) in l.weights.as_mut_slice().iter_mut().zip(weights.as_slice()) {
                        *w -= lr * g;
                    }
                    for (b, g) in l.biases.iter_mut().zip(biases) {
                        *b -= lr * g;
                    }
                }
                (
                    Layer::Noisy(l),
                    LayerGradient::Noisy { mu_weights, sigma_weights, mu_bias, sigma_bias },
                ) => {
                    if !l.mu_weights.same_shape(mu_weights) || l.mu_bias.len() != mu_bias.len() {
                        return Err(Error::RejectedInput("gradient shape mismatch".into()));
                    }
                    for (w, g) in l.mu_weights.as_mut_slice().iter_mut().zip(mu_weights.as_slice())
                    {
                        *w -= lr * g;
                    }
                    for (b, g) in l.mu_bias.iter_mut().zip(mu_bias) {
                        *b -= lr * g;
                    }
                    if !l.noise_disabled {
                        for (w, g) in
                            l.sigma_weights.as_mut_slice().iter_mut().zip(sigma_weights.as_slice())
                        {
                            *w -= lr * g;
                        }
                        for (b, g) in l.sigma_bias.iter_mut().zip(sigma_bias) {
                            *b -= lr * g;
                        }
                    }
                    l.refresh_effective();
                }
                _ => return Err(Error::RejectedInput("gradient kind mismatch".into())),
            }
        }
        Ok(())
    }
}

struct Trace {
    inputs: Vec<Vec<f64>>,
    pre_acts: Vec<Vec<f64>>,
    output: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Gradient-descent step. SGD applies `p -= lr * g` directly; Adam keeps
/// first/second moment estimates shaped like the gradient set.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    m: Option<GradientSet>,
    v: Option<GradientSet>,
    t: u64,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(kind: OptimizerKind) -> Self {
        Self { kind, m: None, v: None, t: 0 }
    }

    pub fn step(&mut self, net: &mut Network, grads: &GradientSet, lr: f64) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgd => net.apply_update(grads, lr),
            OptimizerKind::Adam => {
                let m = self.m.get_or_insert_with(|| GradientSet::zeros_like(net));
                let v = self.v.get_or_insert_with(|| GradientSet::zeros_like(net));
                self.t += 1;
                let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
                let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
                let mut adjusted = grads.clone();
                for ((ml, vl), al) in
                    m.layers.iter_mut().zip(v.layers.iter_mut()).zip(adjusted.layers.iter_mut())
                {
                    for ((mt, vt), at) in
                        ml.tensors_mut().into_iter().zip(vl.tensors_mut()).zip(al.tensors_mut())
                    {
                        for ((mv, vv), g) in mt.iter_mut().zip(vt.iter_mut()).zip(at.iter_mut()) {
                            *mv = Self::BETA1 * *mv + (1.0 - Self::BETA1) * *g;
                            *vv = Self::BETA2 * *vv + (1.0 - Self::BETA2) * *g * *g;
                            let m_hat = *mv / bc1;
                            let v_hat = *vv / bc2;
                            *g = m_hat / (v_hat.sqrt() + Self::EPS);
                        }
                    }
                }
                net.apply_update(&adjusted, lr)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngStream, StreamId};

    fn dense(weights: Vec<Vec<f64>>, biases: Vec<f64>, act: Activation) -> Layer {
        Layer::Dense(DenseLayer::new(Matrix::from_rows(weights).unwrap(), biases, act).unwrap())
    }

    fn random_net(rng: &mut RngStream, dims: &[usize]) -> Network {
        Network::mlp(dims[0], &dims[1..dims.len() - 1], dims[dims.len() - 1], false, 0.0, rng)
            .unwrap()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::new(vec![dense(
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            vec![0.0, 0.0],
            Activation::Relu,
        )])
        .unwrap();
        assert_eq!(net.forward(&[0.4, -1.2]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = Network::new(vec![Layer::Dense(
            DenseLayer::new(Matrix::identity(2), vec![0.0, 0.0], Activation::Identity).unwrap(),
        )])
        .unwrap();
        assert_eq!(net.forward(&[0.3, 0.7]).unwrap(), vec![0.3, 0.7]);
    }

    #[test]
    fn forward_matches_straight_line_matmul() {
        // Fixed 2-layer net, recomputed here literally.
        let w1 = vec![vec![0.2, -0.5, 0.1], vec![0.7, 0.3, -0.2]];
        let b1 = vec![0.1, -0.3];
        let w2 = vec![vec![0.5, -1.0], vec![-0.4, 0.8]];
        let b2 = vec![0.0, 0.25];
        let x = [0.6, -0.9, 0.4];

        let net = Network::new(vec![
            dense(w1.clone(), b1.clone(), Activation::Relu),
            dense(w2.clone(), b2.clone(), Activation::Identity),
        ])
        .unwrap();

        let mut h = [0.0f64; 2];
        for i in 0..2 {
            let z = w1[i][0] * x[0] + w1[i][1] * x[1] + w1[i][2] * x[2] + b1[i];
            h[i] = z.max(0.0);
        }
        let expected = [
            w2[0][0] * h[0] + w2[0][1] * h[1] + b2[0],
            w2[1][0] * h[0] + w2[1][1] * h[1] + b2[1],
        ];

        let q = net.forward(&x).unwrap();
        assert!((q[0] - expected[0]).abs() < 1e-15);
        assert!((q[1] - expected[1]).abs() < 1e-15);
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let net = Network::new(vec![dense(vec![vec![1.0, 2.0]], vec![0.0], Activation::Identity)])
            .unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::RejectedInput(_))));
    }

    #[test]
    fn zero_residual_gives_zero_gradients() {
        let mut rng = RngStream::new(11, StreamId::AgentInit);
        let net = random_net(&mut rng, &[5, 8, 3]);
        let x: Vec<f64> = (0..5).map(|i| 0.1 * i as f64).collect();
        let q = net.forward(&x).unwrap();
        let grads = net.param_gradients(&x, 1, q[1]).unwrap();
        let zeros = GradientSet::zeros_like(&net);
        assert_eq!(grads, zeros);
    }

    #[test]
    fn single_linear_layer_closed_form_gradient() {
        // loss = (t - w.x)^2, d/dw = -2 (t - w.x) x
        let w = vec![vec![0.5, -0.25]];
        let net = Network::new(vec![dense(w, vec![0.0], Activation::Identity)]).unwrap();
        let x = [2.0, 4.0];
        let t = 1.0;
        let q = 0.5 * 2.0 + (-0.25) * 4.0; // = 0.0
        let grads = net.param_gradients(&x, 0, t).unwrap();
        let LayerGradient::Dense { weights, biases } = &grads.layers[0] else { unreachable!() };
        let factor = -2.0 * (t - q);
        assert!((weights.get(0, 0) - factor * x[0]).abs() < 1e-12);
        assert!((weights.get(0, 1) - factor * x[1]).abs() < 1e-12);
        assert!((biases[0] - factor).abs() < 1e-12);
    }

    #[test]
    fn input_gradient_of_linear_action_value_is_weight_row() {
        let w = vec![vec![0.3, -0.7, 0.2], vec![1.0, 0.5, -0.5]];
        let net = Network::new(vec![dense(w.clone(), vec![0.1, 0.2], Activation::Identity)])
            .unwrap();
        let g = net.input_gradient(&[0.5, 0.5, 0.5], InputLoss::ActionValue(0)).unwrap();
        for (gi, wi) in g.iter().zip(&w[0]) {
            assert!((gi - wi).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_network_has_zero_input_gradient() {
        let net = Network::new(vec![dense(
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            vec![0.3, 0.3],
            Activation::Identity,
        )])
        .unwrap();
        let g = net.input_gradient(&[0.2, 0.9], InputLoss::GreedyCrossEntropy).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn update_arithmetic() {
        // lr = 1, w = 0.5, grad = 0.2 -> w = 0.3
        let mut net =
            Network::new(vec![dense(vec![vec![0.5]], vec![0.0], Activation::Identity)]).unwrap();
        let grads = GradientSet {
            layers: vec![LayerGradient::Dense {
                weights: Matrix::from_rows(vec![vec![0.2]]).unwrap(),
                biases: vec![0.0],
            }],
        };
        net.apply_update(&grads, 1.0).unwrap();
        let Layer::Dense(l) = &net.layers[0] else { unreachable!() };
        assert!((l.weights.get(0, 0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_update_is_identity() {
        let mut rng = RngStream::new(3, StreamId::AgentInit);
        let mut net = random_net(&mut rng, &[4, 6, 2]);
        let before = net.clone();
        let zeros = GradientSet::zeros_like(&net);
        net.apply_update(&zeros, 0.7).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn sgd_two_steps_equal_one_summed_step() {
        let mut rng = RngStream::new(9, StreamId::AgentInit);
        let base = random_net(&mut rng, &[3, 5, 2]);
        let x = [0.5, -0.2, 0.8];
        let g1 = base.param_gradients(&x, 0, 1.0).unwrap();
        let g2 = base.param_gradients(&x, 1, -0.5).unwrap();

        let mut two_step = base.clone();
        two_step.apply_update(&g1, 0.01).unwrap();
        two_step.apply_update(&g2, 0.01).unwrap();

        let mut one_step = base.clone();
        let mut sum = g1.clone();
        sum.add_assign(&g2);
        one_step.apply_update(&sum, 0.01).unwrap();

        for (a, b) in two_step.layers.iter().zip(&one_step.layers) {
            let (Layer::Dense(a), Layer::Dense(b)) = (a, b) else { unreachable!() };
            for (x, y) in a.weights.as_slice().iter().zip(b.weights.as_slice()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn update_rejects_shape_mismatch() {
        let mut net =
            Network::new(vec![dense(vec![vec![0.5]], vec![0.0], Activation::Identity)]).unwrap();
        let grads = GradientSet {
            layers: vec![LayerGradient::Dense {
                weights: Matrix::zeros(2, 2),
                biases: vec![0.0, 0.0],
            }],
        };
        assert!(net.apply_update(&grads, 0.1).is_err());
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut net =
            Network::new(vec![dense(vec![vec![1.0]], vec![0.0], Activation::Identity)]).unwrap();
        let mut opt = Optimizer::new(OptimizerKind::Adam);
        let grads = GradientSet {
            layers: vec![LayerGradient::Dense {
                weights: Matrix::from_rows(vec![vec![4.0]]).unwrap(),
                biases: vec![0.0],
            }],
        };
        opt.step(&mut net, &grads, 0.1).unwrap();
        let Layer::Dense(l) = &net.layers[0] else { unreachable!() };
        // First Adam step size is ~lr regardless of gradient scale.
        assert!(l.weights.get(0, 0) < 1.0 && l.weights.get(0, 0) > 0.85);
    }
}
