//! Compact feed-forward network used both as the base classifier and as the
//! class-count surrogate.
//!
//! Hidden layers use ReLU; the output layer is followed by a softmax, so
//! every forward pass yields a valid probability vector.

mod io;
mod train;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::numerics::{argmax, SimplexVector};
use crate::rng::{stream, stream_rng};

pub use io::{load_weights, read_weights, save_weights, write_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};
pub use train::{
    analytic_gradient, loss_value, train, AdamState, Gradients, Loss, TrainConfig, TrainOutcome,
    TrainReport, TrainingData, JS_PROB_FLOOR,
};

/// Anything that maps an input vector to a single class.
pub trait BaseClassifier: Sync {
    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn classify(&self, x: &[f64]) -> Result<usize>;

    /// Classifies `out.len()` row-major inputs packed in `xs`.
    fn classify_batch(&self, xs: &[f64], out: &mut [usize]) -> Result<()> {
        let d = self.input_dim();
        if xs.len() != d * out.len() {
            return Err(Error::DimensionMismatch {
                expected: d * out.len(),
                got: xs.len(),
            });
        }
        for (row, slot) in xs.chunks_exact(d).zip(out.iter_mut()) {
            *slot = self.classify(row)?;
        }
        Ok(())
    }
}

/// Anything that maps an input vector to a distribution over classes.
pub trait DistributionModel {
    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn predict_distribution(&self, x: &[f64]) -> Result<SimplexVector>;
}

/// How the network's softmax output is meant to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Base classifier `f`: only the argmax matters.
    Classifier,
    /// Surrogate `h`: the whole vector estimates normalized class counts.
    SimplexPredictor,
}

/// One dense layer. `weights` is a `fan_in x fan_out` matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            weights: vec![0.0; fan_in * fan_out],
            bias: vec![0.0; fan_out],
        }
    }

    /// `out = bias + input · W`
    #[inline]
    fn apply(&self, input: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (row, &xi) in self.weights.chunks_exact(self.fan_out).zip(input) {
            if xi == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }
}

/// Weights of a multi-layer perceptron plus its head tag.
#[derive(Debug)]
pub struct Network {
    layers: Vec<Layer>,
    head: Head,
    forward_calls: AtomicU64,
}

impl Clone for Network {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            head: self.head,
            forward_calls: AtomicU64::new(0),
        }
    }
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.head == other.head && self.layers == other.layers
    }
}

fn check_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::invalid("a network needs at least input and output dims"));
    }
    if layer_dims.iter().any(|&d| d == 0) {
        return Err(Error::invalid(format!("zero-width layer in {layer_dims:?}")));
    }
    Ok(())
}

impl Network {
    /// He-uniform initialised network, deterministic in `seed`.
    pub fn new(layer_dims: &[usize], head: Head, seed: u64) -> Result<Self> {
        check_dims(layer_dims)?;
        let mut rng = stream_rng(seed, &[stream::WEIGHT_INIT]);
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                let mut layer = Layer::zeros(fan_in, fan_out);
                layer.weights.iter_mut().for_each(|w| *w = dist.sample(&mut rng));
                layer
                    .bias
                    .iter_mut()
                    .for_each(|b| *b = rng.random_range(-0.01..0.01));
                layer
            })
            .collect();
        Ok(Self::assemble(layers, head))
    }

    pub fn zeros(layer_dims: &[usize], head: Head) -> Result<Self> {
        check_dims(layer_dims)?;
        let layers = layer_dims
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Ok(Self::assemble(layers, head))
    }

    /// Builds a network from explicit layers, validating shapes and values.
    pub fn from_layers(layers: Vec<Layer>, head: Head) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.fan_in == 0 || l.fan_out == 0 {
                return Err(Error::invalid(format!("layer {i} has zero width")));
            }
            if l.weights.len() != l.fan_in * l.fan_out || l.bias.len() != l.fan_out {
                return Err(Error::invalid(format!("layer {i} storage does not match its shape")));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("layer {i} has non-finite parameters")));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out != pair[1].fan_in {
                return Err(Error::invalid(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].fan_out,
                    i + 1,
                    pair[1].fan_in
                )));
            }
        }
        Ok(Self::assemble(layers, head))
    }

    fn assemble(layers: Vec<Layer>, head: Head) -> Self {
        Self {
            layers,
            head,
            forward_calls: AtomicU64::new(0),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn with_head(mut self, head: Head) -> Self {
        self.head = head;
        self
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].fan_in];
        dims.extend(self.layers.iter().map(|l| l.fan_out));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map(|l| l.fan_out).unwrap_or(0)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Number of single-input forward passes since construction or the last
    /// [`Network::reset_forward_calls`].
    pub fn forward_calls(&self) -> u64 {
        self.forward_calls.load(Ordering::Relaxed)
    }

    pub fn reset_forward_calls(&self) {
        self.forward_calls.store(0, Ordering::Relaxed);
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Pre-softmax output, written into `scratch`-backed buffers.
    fn logits_into(&self, x: &[f64], a: &mut Vec<f64>, b: &mut Vec<f64>) {
        a.clear();
        a.extend_from_slice(x);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            b.clear();
            b.resize(layer.fan_out, 0.0);
            layer.apply(a, b);
            if i != last {
                b.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(a, b);
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let (mut a, mut b) = (Vec::new(), Vec::new());
        self.logits_into(x, &mut a, &mut b);
        Ok(a)
    }

    /// Softmax output of the network.
    pub fn forward(&self, x: &[f64]) -> Result<SimplexVector> {
        self.check_input(x)?;
        self.forward_calls.fetch_add(1, Ordering::Relaxed);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        self.logits_into(x, &mut a, &mut b);
        softmax_in_place(&mut a);
        Ok(SimplexVector::from_trusted(a))
    }

    /// Argmax of the output, lowest class index on ties.
    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        self.check_input(x)?;
        let (mut a, mut b) = (Vec::new(), Vec::new());
        self.logits_into(x, &mut a, &mut b);
        // softmax is monotone, but ties after exponentiation must resolve the
        // same way forward() would, so compare the probabilities
        softmax_in_place(&mut a);
        Ok(argmax(&a))
    }
}

impl BaseClassifier for Network {
    fn input_dim(&self) -> usize {
        Network::input_dim(self)
    }

    fn num_classes(&self) -> usize {
        Network::num_classes(self)
    }

    fn classify(&self, x: &[f64]) -> Result<usize> {
        Network::classify(self, x)
    }

    fn classify_batch(&self, xs: &[f64], out: &mut [usize]) -> Result<()> {
        let d = self.input_dim();
        if xs.len() != d * out.len() {
            return Err(Error::DimensionMismatch {
                expected: d * out.len(),
                got: xs.len(),
            });
        }
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (row, slot) in xs.chunks_exact(d).zip(out.iter_mut()) {
            self.logits_into(row, &mut a, &mut b);
            softmax_in_place(&mut a);
            *slot = argmax(&a);
        }
        Ok(())
    }
}

impl DistributionModel for Network {
    fn input_dim(&self) -> usize {
        Network::input_dim(self)
    }

    fn num_classes(&self) -> usize {
        Network::num_classes(self)
    }

    fn predict_distribution(&self, x: &[f64]) -> Result<SimplexVector> {
        self.forward(x)
    }
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

/// A classifier that ignores its input. Useful as a fixture and as the
/// degenerate end of the smoothing guarantees.
#[derive(Debug, Clone, Copy)]
pub struct ConstantClassifier {
    pub input_dim: usize,
    pub num_classes: usize,
    pub class: usize,
}

impl BaseClassifier for ConstantClassifier {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn classify(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(self.class)
    }
}
