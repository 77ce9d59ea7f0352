//! Deterministic dense-network substrate.
//!
//! Every learned map in the pipeline (feature map φ, output layer f̄,
//! auxiliary map ψ, label head F̄, discriminator heads) is a [`DenseNet`].
//! Gradients are computed by hand-written backpropagation and verified
//! against central finite differences in [`gradcheck`].

pub mod gradcheck;
mod loss;
mod scalar;
mod sgd;

pub(crate) use loss::batch_grad;
pub use loss::{backprop_grad, loss_and_grad, mean_loss, sigmoid, softmax, LossKind, Targets};
pub use scalar::{fit_log_scale, ScalarFit, LOG_SCALE_MAX, LOG_SCALE_MIN};
pub use sgd::{sgd_train, SgdConfig, TrainData, TrainOutcome};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the pre-activation value.
    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected layer; `weights` is row-major `[outputs × inputs]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            activation,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform in `[-a, a]` with `a = sqrt(6 / (in + out))`; biases start at zero.
    pub fn glorot(inputs: usize, outputs: usize, activation: Activation, rng: &mut Rng) -> Self {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-a..=a))
            .collect();
        Self {
            inputs,
            outputs,
            activation,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    pub fn identity(dim: usize, activation: Activation) -> Self {
        let mut layer = Self::zeros(dim, dim, activation);
        for i in 0..dim {
            layer.weights[i * dim + i] = 1.0;
        }
        layer
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        self.bias
            .iter()
            .enumerate()
            .map(|(o, b)| {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Layer>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input fed to each layer.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    /// Inverted-dropout mask applied to each hidden layer's output.
    masks: Vec<Option<Vec<f64>>>,
    pub output: Vec<f64>,
}

/// Parameter-shaped gradient (or update) buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|g| *g *= factor);
            l.bias.iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, factor: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights
                .iter_mut()
                .zip(&b.weights)
                .for_each(|(x, y)| *x += factor * y);
            a.bias
                .iter_mut()
                .zip(&b.bias)
                .for_each(|(x, y)| *x += factor * y);
        }
    }

    /// Same ordering as [`DenseNet::params`].
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|g| g.is_finite())
    }
}

impl DenseNet {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let net = Self { layers };
        net.validate()?;
        Ok(net)
    }

    /// Glorot-initialized network with layer sizes `dims` (length = layers + 1).
    pub fn init(dims: &[usize], activations: &[Activation], rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::invalid(format!(
                "{} layer sizes need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                activations.len()
            )));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| Layer::glorot(w[0], w[1], act, rng))
            .collect();
        Self::new(layers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        for layer in &self.layers {
            if layer.inputs == 0 || layer.outputs == 0 {
                return Err(Error::invalid("layer with zero width"));
            }
            if layer.weights.len() != layer.inputs * layer.outputs {
                return Err(Error::Shape {
                    context: "layer weights",
                    expected: layer.inputs * layer.outputs,
                    got: layer.weights.len(),
                });
            }
            if layer.bias.len() != layer.outputs {
                return Err(Error::Shape {
                    context: "layer bias",
                    expected: layer.outputs,
                    got: layer.bias.len(),
                });
            }
        }
        for pair in self.layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Shape {
                    context: "layer chaining",
                    expected: pair[0].outputs,
                    got: pair[1].inputs,
                });
            }
        }
        if !self.is_finite() {
            return Err(Error::invalid("non-finite parameter"));
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Splits off the last layer: `(feature map, output layer)`.
    pub fn split_last(mut self) -> Result<(DenseNet, DenseNet)> {
        if self.layers.len() < 2 {
            return Err(Error::invalid("cannot split a single-layer network"));
        }
        let head = self.layers.pop().expect("checked length");
        Ok((self, DenseNet { layers: vec![head] }))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer
                .pre_activation(&cur)
                .into_iter()
                .map(|v| layer.activation.apply(v))
                .collect();
        }
        Ok(cur)
    }

    pub fn forward_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.forward(x)).collect()
    }

    /// Forward pass that records what backprop needs. When `dropout` is set,
    /// every hidden layer's output is multiplied by an inverted-dropout mask.
    pub fn forward_trace(&self, x: &[f64], dropout: Option<(f64, &mut Rng)>) -> Result<Trace> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut dropout = dropout.filter(|(rate, _)| *rate > 0.0);
        let mut trace = Trace {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
            masks: Vec::with_capacity(self.layers.len()),
            output: Vec::new(),
        };
        let mut cur = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let pre = layer.pre_activation(&cur);
            let mut post: Vec<f64> = pre.iter().map(|&v| layer.activation.apply(v)).collect();
            let mask = match dropout.as_mut() {
                Some((rate, rng)) if i < last => {
                    let keep = 1.0 - *rate;
                    let mask: Vec<f64> = (0..post.len())
                        .map(|_| {
                            if rng.random::<f64>() < *rate {
                                0.0
                            } else {
                                1.0 / keep
                            }
                        })
                        .collect();
                    post.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                    Some(mask)
                }
                _ => None,
            };
            trace.inputs.push(std::mem::replace(&mut cur, post));
            trace.pre.push(pre);
            trace.masks.push(mask);
        }
        trace.output = cur;
        Ok(trace)
    }

    /// Accumulates `d_output`'s pullback into `grads` and returns the
    /// gradient with respect to the network input.
    pub fn backward(&self, trace: &Trace, d_output: &[f64], grads: &mut Gradients) -> Vec<f64> {
        let mut delta = d_output.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if let Some(mask) = &trace.masks[i] {
                delta.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
            }
            delta
                .iter_mut()
                .zip(&trace.pre[i])
                .for_each(|(d, &p)| *d *= layer.activation.derivative(p));
            let input = &trace.inputs[i];
            let g = &mut grads.layers[i];
            let mut d_input = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = o * layer.inputs;
                for (j, &v) in input.iter().enumerate() {
                    g.weights[row + j] += d * v;
                    d_input[j] += d * layer.weights[row + j];
                }
            }
            delta = d_input;
        }
        delta
    }

    /// `params -= step * grads`.
    pub fn apply_update(&mut self, grads: &Gradients, step: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            l.weights
                .iter_mut()
                .zip(&g.weights)
                .for_each(|(w, d)| *w -= step * d);
            l.bias.iter_mut().zip(&g.bias).for_each(|(b, d)| *b -= step * d);
        }
    }

    /// Flat parameter vector: per layer, weights (row-major) then bias.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape {
                context: "parameter vector",
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                context: "network input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// A fixed chain of networks applied in order, e.g. φ or ψ∘φ. The empty
/// chain is the identity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub stages: Vec<DenseNet>,
}

impl FeatureMap {
    pub fn new(stages: Vec<DenseNet>) -> Result<Self> {
        for pair in stages.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Shape {
                    context: "feature map chaining",
                    expected: pair[0].output_dim(),
                    got: pair[1].input_dim(),
                });
            }
        }
        Ok(Self { stages })
    }

    pub fn then(&self, stage: DenseNet) -> Result<Self> {
        let mut stages = self.stages.clone();
        stages.push(stage);
        Self::new(stages)
    }

    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        self.stages.last().map_or(input_dim, DenseNet::output_dim)
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cur = x.to_vec();
        for stage in &self.stages {
            cur = stage.forward(&cur)?;
        }
        Ok(cur)
    }

    pub fn apply_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.apply(x)).collect()
    }
}
