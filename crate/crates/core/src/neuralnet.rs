//! A small multilayer perceptron with hand-written backpropagation and an Adam optimizer.
//!
//! Rows of a batch are samples. Layer `l` computes `act(x · W_l + b_l)` with `W_l` of shape
//! `fan_in × fan_out`. The final layer is always linear.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::seeding::{seeded_rng, StageRng};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("bad architecture: {0}")]
    BadArchitecture(String),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("checkpoint json: {0}")]
    Json(#[from] serde_json::Error),
}

fn mismatch(expected: impl std::fmt::Debug, found: impl std::fmt::Debug) -> NetError {
    NetError::ShapeMismatch {
        expected: format!("{expected:?}"),
        found: format!("{found:?}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Relu => v.max(T::zero()),
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output<T: Scalar>(self, out: T) -> T {
        match self {
            // Subgradient 0 at the kink.
            Activation::Relu => {
                if out > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - out * out,
            Activation::Identity => T::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub weights: Array2<T>,
    pub biases: Array1<T>,
    pub activation: Activation,
}

impl<T: Scalar> Layer<T> {
    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
}

/// Per-layer inputs and outputs retained by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    inputs: Vec<Array2<T>>,
    outputs: Vec<Array2<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients<T> {
    pub weights: Array2<T>,
    pub biases: Array1<T>,
}

/// Gradients congruent with an [`Mlp`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGradients<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Mlp<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradients {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    biases: Array1::zeros(l.biases.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.biases += &b.biases;
        }
    }

    pub fn scale(&mut self, factor: T) {
        for g in &mut self.layers {
            g.weights.mapv_inplace(|v| v * factor);
            g.biases.mapv_inplace(|v| v * factor);
        }
    }

    /// Parameters in the same flat order as [`Mlp::param`].
    pub fn flat(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|g| g.weights.iter().chain(g.biases.iter()).copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.weights.iter().chain(g.biases.iter()).all(|v| v.is_finite()))
    }

    fn congruent(&self, net: &Mlp<T>) -> bool {
        self.layers.len() == net.layers.len()
            && self.layers.iter().zip(&net.layers).all(|(g, l)| {
                g.weights.dim() == l.weights.dim() && g.biases.len() == l.biases.len()
            })
    }
}

/// Adam moments and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    pub step: u64,
    first: Gradients<T>,
    second: Gradients<T>,
}

impl<T: Scalar> OptimizerState<T> {
    /// Adam with `β₁ = 0.9`, `β₂ = 0.999`, `ε = 1e-8`.
    pub fn adam(net: &Mlp<T>, learning_rate: T) -> Self {
        Self {
            learning_rate,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
            step: 0,
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
        }
    }
}

impl<T: Scalar> Mlp<T> {
    /// Glorot-uniform weights, zero biases. Hidden layers use `activation`, the last layer is
    /// linear.
    pub fn init(sizes: &[usize], activation: Activation, seed: u64) -> Result<Self, NetError> {
        Self::init_with_rng(sizes, activation, &mut seeded_rng(seed))
    }

    pub fn init_with_rng(sizes: &[usize], activation: Activation, rng: &mut StageRng) -> Result<Self, NetError> {
        if sizes.len() < 2 {
            return Err(NetError::BadArchitecture(format!(
                "need at least an input and an output size, got {sizes:?}"
            )));
        }
        if sizes.contains(&0) {
            return Err(NetError::BadArchitecture(format!("zero-width layer in {sizes:?}")));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights =
                    Array2::from_shape_simple_fn((fan_in, fan_out), || T::lit(rng.random_range(-bound..bound)));
                Layer {
                    weights,
                    biases: Array1::zeros(fan_out),
                    activation: if l == last { Activation::Identity } else { activation },
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Wraps explicit layers after checking that dimensions chain.
    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(NetError::BadArchitecture("no layers".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.biases.len() != layer.fan_out() {
                return Err(mismatch(layer.fan_out(), layer.biases.len()));
            }
            if l > 0 && layers[l - 1].fan_out() != layer.fan_in() {
                return Err(mismatch(layers[l - 1].fan_out(), layer.fan_in()));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    /// Layer widths, input first.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::fan_out))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn locate(&self, mut index: usize) -> (usize, Option<(usize, usize)>, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            let w = layer.weights.len();
            if index < w {
                return (l, Some((index / layer.fan_out(), index % layer.fan_out())), 0);
            }
            index -= w;
            if index < layer.biases.len() {
                return (l, None, index);
            }
            index -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameter by flat index: each layer's weights (row-major) then its biases.
    pub fn param(&self, index: usize) -> T {
        match self.locate(index) {
            (l, Some(rc), _) => self.layers[l].weights[rc],
            (l, None, b) => self.layers[l].biases[b],
        }
    }

    pub fn set_param(&mut self, index: usize, value: T) {
        match self.locate(index) {
            (l, Some(rc), _) => self.layers[l].weights[rc] = value,
            (l, None, b) => self.layers[l].biases[b] = value,
        }
    }

    fn check_input(&self, batch: &Array2<T>) -> Result<(), NetError> {
        if batch.ncols() != self.input_dim() {
            return Err(mismatch(
                format!("batch width {}", self.input_dim()),
                format!("{}", batch.ncols()),
            ));
        }
        Ok(())
    }

    /// Forward pass without retaining intermediates.
    pub fn predict(&self, batch: &Array2<T>) -> Result<Array2<T>, NetError> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for layer in &self.layers {
            let mut z = x.dot(&layer.weights) + &layer.biases;
            let act = layer.activation;
            z.mapv_inplace(|v| act.apply(v));
            x = z;
        }
        Ok(x)
    }

    pub fn forward(&self, batch: &Array2<T>) -> Result<(Array2<T>, ForwardCache<T>), NetError> {
        self.check_input(batch)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for layer in &self.layers {
            let mut z = x.dot(&layer.weights) + &layer.biases;
            let act = layer.activation;
            z.mapv_inplace(|v| act.apply(v));
            inputs.push(x);
            x = z.clone();
            outputs.push(z);
        }
        Ok((x, ForwardCache { inputs, outputs }))
    }

    /// Reverse pass: parameter gradients and the gradient with respect to the input batch.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        output_grad: &Array2<T>,
    ) -> Result<(Gradients<T>, Array2<T>), NetError> {
        let last = cache
            .outputs
            .last()
            .ok_or_else(|| NetError::BadArchitecture("empty cache".into()))?;
        if cache.outputs.len() != self.layers.len() {
            return Err(mismatch(self.layers.len(), cache.outputs.len()));
        }
        if output_grad.dim() != last.dim() {
            return Err(mismatch(last.dim(), output_grad.dim()));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = output_grad.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let act = layer.activation;
            let mut delta = upstream;
            ndarray::Zip::from(&mut delta)
                .and(&cache.outputs[l])
                .for_each(|d, &o| *d *= act.derivative_from_output(o));
            let weights = cache.inputs[l].t().dot(&delta);
            let biases = delta.sum_axis(Axis(0));
            upstream = delta.dot(&layer.weights.t());
            grads.push(LayerGradients { weights, biases });
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, upstream))
    }

    /// One bias-corrected Adam step.
    pub fn apply_update(&mut self, grads: &Gradients<T>, state: &mut OptimizerState<T>) -> Result<(), NetError> {
        if !grads.congruent(self) || !state.first.congruent(self) {
            return Err(mismatch(self.sizes(), "gradient shapes"));
        }
        state.step += 1;
        let t = state.step as i32;
        let (b1, b2) = (state.beta1, state.beta2);
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        let (lr, eps) = (state.learning_rate, state.epsilon);
        let one = T::one();
        for (((layer, g), m), v) in self
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut state.first.layers)
            .zip(&mut state.second.layers)
        {
            let update = |p: &mut T, g: &T, m: &mut T, v: &mut T| {
                *m = b1 * *m + (one - b1) * *g;
                *v = b2 * *v + (one - b2) * *g * *g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            };
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(update);
            ndarray::Zip::from(&mut layer.biases)
                .and(&g.biases)
                .and(&mut m.biases)
                .and(&mut v.biases)
                .for_each(update);
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerRecord {
                    fan_in: l.fan_in(),
                    fan_out: l.fan_out(),
                    activation: l.activation,
                    weights: l.weights.iter().copied().collect(),
                    biases: l.biases.to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint<T>) -> Result<Self, NetError> {
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(NetError::BadCheckpoint(format!("unknown format {:?}", ckpt.format)));
        }
        let layers = ckpt
            .layers
            .iter()
            .map(|r| {
                let weights = Array2::from_shape_vec((r.fan_in, r.fan_out), r.weights.clone())
                    .map_err(|e| NetError::BadCheckpoint(e.to_string()))?;
                if r.biases.len() != r.fan_out {
                    return Err(NetError::BadCheckpoint("bias length".into()));
                }
                if weights.iter().chain(&r.biases).any(|v| !v.is_finite()) {
                    return Err(NetError::BadCheckpoint("non-finite parameter".into()));
                }
                Ok(Layer {
                    weights,
                    biases: Array1::from(r.biases.clone()),
                    activation: r.activation,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_layers(layers)
    }

    pub fn to_json(&self) -> Result<String, NetError> {
        Ok(serde_json::to_string(&self.to_checkpoint())?)
    }

    pub fn from_json(text: &str) -> Result<Self, NetError> {
        Self::from_checkpoint(&serde_json::from_str(text)?)
    }
}

const CHECKPOINT_FORMAT: &str = "rpspectral-mlp-v1";

/// Serialized network: a layer-shape header per layer followed by flat row-major parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Checkpoint<T> {
    pub format: String,
    pub layers: Vec<LayerRecord<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LayerRecord<T> {
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck<T> {
    pub max_relative_error: T,
    pub parameters_checked: usize,
}

/// Denominator floor for relative errors. Central differences at `ε = 1e-5` carry round-off
/// near `1e-10` even where the true gradient is exactly zero, so smaller gradients compare
/// absolutely.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-5;

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error<T: Scalar>(a: T, b: T) -> T {
    (a - b).abs() / a.abs().max(b.abs()).max(T::lit(RELATIVE_ERROR_FLOOR))
}

/// Compares backpropagated parameter gradients against central differences of `loss`.
///
/// `loss` maps the network output to the scalar loss and its gradient with respect to that
/// output. Every parameter is checked when the network has at most `max_params`
/// parameters, otherwise a seeded sample of `max_params` of them.
pub fn gradient_check<T, F>(
    net: &Mlp<T>,
    batch: &Array2<T>,
    eps: T,
    max_params: usize,
    seed: u64,
    loss: F,
) -> Result<GradientCheck<T>, NetError>
where
    T: Scalar,
    F: Fn(&Array2<T>) -> (T, Array2<T>),
{
    let (out, cache) = net.forward(batch)?;
    let (_, out_grad) = loss(&out);
    let (grads, _) = net.backward(&cache, &out_grad)?;
    let analytic = grads.flat();

    let total = net.param_count();
    let indices: Vec<usize> = if total <= max_params {
        (0..total).collect()
    } else {
        rand::seq::index::sample(&mut seeded_rng(seed), total, max_params).into_vec()
    };

    let mut probe = net.clone();
    let two = T::lit(2.0);
    let mut worst = T::zero();
    for &i in &indices {
        let original = probe.param(i);
        probe.set_param(i, original + eps);
        let plus = loss(&probe.predict(batch)?).0;
        probe.set_param(i, original - eps);
        let minus = loss(&probe.predict(batch)?).0;
        probe.set_param(i, original);
        let numeric = (plus - minus) / (two * eps);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(GradientCheck {
        max_relative_error: worst,
        parameters_checked: indices.len(),
    })
}
