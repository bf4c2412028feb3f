//! A small fully connected classifier trained with mini-batch SGD.
//!
//! Parameters are stored in one flat vector. Layer `l` occupies a
//! contiguous block: its `out x in` weight matrix in row-major order
//! followed by its `out` biases. Gradients and optimizer state use the same
//! layout.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::{argmax, LossSpec};
use crate::metrics::{confusion, ConfusionMatrix};
use crate::rng::{seeded, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, a: f64) -> f64 {
        match self {
            Self::Tanh => libm::tanh(a),
            Self::Relu => a.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `a` and output `h`.
    fn derivative(self, a: f64, h: f64) -> f64 {
        match self {
            Self::Tanh => 1.0 - h * h,
            Self::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    dims: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::InvalidDims("need an input and an output size"));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidDims("every layer needs at least one unit"));
    }
    if dims[dims.len() - 1] < 2 {
        return Err(Error::InvalidDims("need at least 2 output classes"));
    }
    Ok(())
}

fn count_parameters(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Network {
    /// Weights drawn uniformly from `[-1, 1] / sqrt(fan_in)`, biases zero.
    pub fn init(dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(dims, activation)?;
        let mut rng = seeded(seed, Stream::Init);
        for l in 0..net.depth() {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let bound = 1.0 / libm::sqrt(fan_in as f64);
            let start = net.layer_offset(l);
            for w in &mut net.params[start..start + fan_in * fan_out] {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(dims: &[usize], activation: Activation) -> Result<Self> {
        validate_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            activation,
            params: vec![0.0; count_parameters(dims)],
        })
    }

    pub fn from_parameters(dims: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        validate_dims(dims)?;
        if params.len() != count_parameters(dims) {
            return Err(Error::LengthMismatch {
                what: "parameters",
                expected: count_parameters(dims),
                actual: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("parameters"));
        }
        Ok(Self { dims: dims.to_vec(), activation, params })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn num_classes(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    /// Number of affine layers.
    pub fn depth(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_offset(&self, l: usize) -> usize {
        count_parameters(&self.dims[..=l])
    }

    /// `(weights, biases)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
        let start = self.layer_offset(l);
        let (w, rest) = self.params[start..].split_at(n_in * n_out);
        (w, &rest[..n_out])
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::LengthMismatch {
                what: "input features",
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Pre-activations and outputs of every layer. `outputs[0]` is the input.
    fn trace(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut pre = Vec::with_capacity(self.depth());
        let mut outputs = Vec::with_capacity(self.depth() + 1);
        outputs.push(x.to_vec());
        for l in 0..self.depth() {
            let (w, b) = self.layer(l);
            let h = &outputs[l];
            let a: Vec<f64> = b
                .iter()
                .zip(w.chunks_exact(h.len()))
                .map(|(&bias, row)| bias + row.iter().zip(h).map(|(wi, hi)| wi * hi).sum::<f64>())
                .collect();
            let out = if l + 1 == self.depth() {
                a.clone()
            } else {
                a.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(a);
            outputs.push(out);
        }
        (pre, outputs)
    }

    /// Logits for one input. The output layer is linear.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let (_, mut outputs) = self.trace(x);
        Ok(outputs.pop().unwrap_or_default())
    }

    /// Gradient of `<upstream, logits(x)>` with respect to every parameter.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<Gradients> {
        let mut grads = Gradients::zeros(self);
        self.backward_into(x, upstream, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Network::backward`] but accumulates into `grads`.
    pub fn backward_into(&self, x: &[f64], upstream: &[f64], grads: &mut Gradients) -> Result<()> {
        self.check_input(x)?;
        if upstream.len() != self.num_classes() {
            return Err(Error::LengthMismatch {
                what: "upstream gradient",
                expected: self.num_classes(),
                actual: upstream.len(),
            });
        }
        if grads.values.len() != self.params.len() {
            return Err(Error::LengthMismatch {
                what: "gradient buffer",
                expected: self.params.len(),
                actual: grads.values.len(),
            });
        }
        let (pre, outputs) = self.trace(x);
        let mut delta = upstream.to_vec();
        for l in (0..self.depth()).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let start = self.layer_offset(l);
            let h = &outputs[l];
            {
                let (gw, rest) = grads.values[start..].split_at_mut(n_in * n_out);
                for (o, &d) in delta.iter().enumerate() {
                    for (g, &hi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(h) {
                        *g += d * hi;
                    }
                    rest[o] += d;
                }
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                let mut next = vec![0.0; n_in];
                for (o, &d) in delta.iter().enumerate() {
                    for (n, &wi) in next.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *n += d * wi;
                    }
                }
                for (i, n) in next.iter_mut().enumerate() {
                    *n *= self.activation.derivative(pre[l - 1][i], h[i]);
                }
                delta = next;
            }
        }
        Ok(())
    }

    /// Loss of one sample and its gradient with respect to the parameters.
    pub fn loss_and_gradients(&self, x: &[f64], y: usize, spec: &LossSpec) -> Result<(f64, Gradients)> {
        let z = self.forward(x)?;
        let r = spec.evaluate(&z, y)?;
        Ok((r.loss, self.backward(x, &r.grad)?))
    }

    /// Index of the largest logit, ties broken toward the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    pub fn predict_all(&self, data: &Dataset) -> Result<Vec<usize>> {
        data.rows().map(|(x, _)| self.predict(x)).collect()
    }

    pub fn confusion(&self, data: &Dataset) -> Result<ConfusionMatrix> {
        if data.k() != self.num_classes() {
            return Err(Error::LengthMismatch {
                what: "dataset classes",
                expected: self.num_classes(),
                actual: data.k(),
            });
        }
        confusion(&self.predict_all(data)?, data.labels(), data.k())
    }
}

/// Parameter gradients, laid out like [`Network::parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    values: Vec<f64>,
}

impl Gradients {
    pub fn zeros(net: &Network) -> Self {
        Self { values: vec![0.0; net.parameter_count()] }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|g| *g *= factor);
    }

    fn clear(&mut self) {
        self.values.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// SGD with classical momentum: `v <- momentum * v + g`, `theta <- theta - lr * v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(net: &Network, learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(Error::NonPositive { name: "learning_rate", value: learning_rate });
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidParameter {
                name: "momentum",
                reason: "must lie in [0, 1)",
            });
        }
        Ok(Self {
            learning_rate,
            momentum,
            velocity: vec![0.0; net.parameter_count()],
        })
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        if grads.values.len() != net.params.len() || self.velocity.len() != net.params.len() {
            return Err(Error::LengthMismatch {
                what: "gradients",
                expected: net.params.len(),
                actual: grads.values.len(),
            });
        }
        for ((theta, v), &g) in net.params.iter_mut().zip(&mut self.velocity).zip(&grads.values) {
            *v = self.momentum * *v + g;
            *theta -= self.learning_rate * *v;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub loss: LossSpec,
    pub shuffle: bool,
    /// L2 penalty on weights (not biases). Off by default.
    #[cfg_attr(feature = "serde", serde(default))]
    pub weight_decay: f64,
    /// Per-epoch multiplicative learning-rate decay. 1.0 means constant.
    #[cfg_attr(feature = "serde", serde(default = "one"))]
    pub lr_decay: f64,
}

#[cfg(feature = "serde")]
fn one() -> f64 {
    1.0
}

impl TrainConfig {
    pub fn new(loss: LossSpec, seed: u64) -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.1,
            momentum: 0.9,
            seed,
            loss,
            shuffle: true,
            weight_decay: 0.0,
            lr_decay: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter {
                name: "batch_size",
                reason: "must be at least 1",
            });
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::NonPositive { name: "learning_rate", value: self.learning_rate });
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter {
                name: "momentum",
                reason: "must lie in [0, 1)",
            });
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "weight_decay",
                reason: "must be finite and nonnegative",
            });
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "lr_decay",
                reason: "must lie in (0, 1]",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-sample training loss over the epoch.
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    pub val_recall: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

/// Runs `config.epochs` epochs of mini-batch SGD on `train_set`.
///
/// Batch gradients are the mean of the per-sample gradients. The shuffle
/// order is drawn from `config.seed`, so a run is a pure function of
/// `(net, data, config)`.
pub fn train(
    mut net: Network,
    train_set: &Dataset,
    validation: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<(Network, TrainHistory)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    for data in core::iter::once(train_set).chain(validation) {
        if data.dims() != net.input_dim() {
            return Err(Error::LengthMismatch {
                what: "dataset features",
                expected: net.input_dim(),
                actual: data.dims(),
            });
        }
        if data.k() != net.num_classes() {
            return Err(Error::LengthMismatch {
                what: "dataset classes",
                expected: net.num_classes(),
                actual: data.k(),
            });
        }
    }
    if let Some(k) = config.loss.k() {
        if k != net.num_classes() {
            return Err(Error::LengthMismatch {
                what: "loss classes",
                expected: net.num_classes(),
                actual: k,
            });
        }
    }

    let mut sgd = Sgd::new(&net, config.learning_rate, config.momentum)?;
    let mut rng = seeded(config.seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut grads = Gradients::zeros(&net);
    let mut history = TrainHistory::default();

    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.clear();
            for &i in batch {
                let x = train_set.row(i);
                let z = net.forward(x)?;
                let r = config.loss.evaluate(&z, train_set.labels()[i])?;
                loss_sum += r.loss;
                net.backward_into(x, &r.grad, &mut grads)?;
            }
            grads.scale(1.0 / batch.len() as f64);
            if config.weight_decay > 0.0 {
                add_weight_decay(&net, &mut grads, config.weight_decay);
            }
            sgd.step(&mut net, &grads)?;
        }
        sgd.learning_rate *= config.lr_decay;

        let (val_accuracy, val_recall) = match validation {
            Some(v) if !v.is_empty() => {
                let m = net.confusion(v)?;
                (Some(m.accuracy()?), Some(m.per_class_recall()))
            }
            _ => (None, None),
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_accuracy,
            val_recall,
        });
    }
    Ok((net, history))
}

fn add_weight_decay(net: &Network, grads: &mut Gradients, decay: f64) {
    for l in 0..net.depth() {
        let start = net.layer_offset(l);
        let n = net.dims[l] * net.dims[l + 1];
        for (g, &w) in grads.values[start..start + n].iter_mut().zip(&net.params[start..start + n]) {
            *g += decay * w;
        }
    }
}
