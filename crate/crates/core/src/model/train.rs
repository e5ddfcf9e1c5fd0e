use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{softmax_in_place, Layer, Network};
use crate::error::{Error, Result};
use crate::numerics::SIMPLEX_TOL;
use crate::rng::{stream, stream_rng};

/// Model probabilities are floored at this value inside logarithms of the
/// Jensen-Shannon loss.
pub const JS_PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// Cross-entropy against a target distribution (one-hot for labels).
    CrossEntropy,
    /// Jensen-Shannon divergence between the softmax output and the target.
    #[serde(alias = "js")]
    JensenShannon,
}

/// Mini-batch Adam with a step-decay learning-rate schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    /// Epochs between learning-rate decays.
    pub lr_step: usize,
    pub lr_gamma: f64,
    pub seed: u64,
    /// When set, every example receives fresh `N(0, s^2 I)` noise each time
    /// it is drawn into a batch.
    pub gaussian_augmentation: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 128,
            learning_rate: 1e-3,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            lr_step: 20,
            lr_gamma: 0.5,
            seed: 0,
            gaussian_augmentation: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1)")));
            }
        }
        if self.lr_step == 0 {
            return bad("lr_step must be at least 1");
        }
        if !(self.lr_gamma > 0.0 && self.lr_gamma <= 1.0) {
            return bad("lr_gamma must lie in (0, 1]");
        }
        if let Some(s) = self.gaussian_augmentation {
            if !(s > 0.0 && s.is_finite()) {
                return bad("gaussian_augmentation must be positive");
            }
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_gamma.powi((epoch / self.lr_step) as i32)
    }
}

/// Inputs paired with target distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

impl TrainingData {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::invalid(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let d = inputs[0].len();
        let k = targets[0].len();
        for (i, (x, t)) in inputs.iter().zip(&targets).enumerate() {
            if x.len() != d {
                return Err(Error::invalid(format!("input {i} has dim {} not {d}", x.len())));
            }
            if t.len() != k {
                return Err(Error::invalid(format!("target {i} has {} classes not {k}", t.len())));
            }
            let sum: f64 = t.iter().sum();
            if t.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::invalid(format!("target {i} is not a distribution")));
            }
        }
        Ok(Self { inputs, targets })
    }

    /// One-hot targets from class labels.
    pub fn labeled(inputs: Vec<Vec<f64>>, labels: &[usize], num_classes: usize) -> Result<Self> {
        let targets = labels
            .iter()
            .map(|&c| {
                if c >= num_classes {
                    return Err(Error::invalid(format!("label {c} >= {num_classes}")));
                }
                let mut t = vec![0.0; num_classes];
                t[c] = 1.0;
                Ok(t)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(inputs, targets)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn num_classes(&self) -> usize {
        self.targets[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }
}

/// Gradient of a loss with respect to every weight and bias, laid out like
/// the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| Layer::zeros(l.fan_in, l.fan_out))
                .collect(),
        }
    }

    fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
    }

    /// Flattened view: per layer, weights then bias.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|g| g.is_finite()))
    }
}

/// Activations kept from a forward pass for backpropagation.
struct Trace {
    /// `acts[0]` is the input; `acts[i]` the post-ReLU input to layer `i`.
    acts: Vec<Vec<f64>>,
    logits: Vec<f64>,
    probs: Vec<f64>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Trace {
    fn new(net: &Network) -> Self {
        Self {
            acts: net.layers().iter().map(|l| vec![0.0; l.fan_in]).collect(),
            logits: vec![0.0; net.num_classes()],
            probs: vec![0.0; net.num_classes()],
            delta: Vec::new(),
            delta_prev: Vec::new(),
        }
    }

    fn forward(&mut self, net: &Network, x: &[f64]) {
        self.acts[0].copy_from_slice(x);
        let layers = net.layers();
        let last = layers.len() - 1;
        for (i, layer) in layers.iter().enumerate() {
            if i == last {
                layer.apply(&self.acts[i], &mut self.logits);
            } else {
                let (head, tail) = self.acts.split_at_mut(i + 1);
                layer.apply(&head[i], &mut tail[0]);
                tail[0].iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        self.probs.copy_from_slice(&self.logits);
        softmax_in_place(&mut self.probs);
    }

    /// Loss at the current trace and its gradient w.r.t. the logits (left in
    /// `self.delta`).
    fn loss_and_logit_grad(&mut self, target: &[f64], loss: Loss) -> f64 {
        let p = &self.probs;
        self.delta.clear();
        match loss {
            Loss::CrossEntropy => {
                let max = self.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + self.logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
                let t_sum: f64 = target.iter().sum();
                let value = -target
                    .iter()
                    .zip(&self.logits)
                    .map(|(t, z)| if *t > 0.0 { t * (z - lse) } else { 0.0 })
                    .sum::<f64>();
                self.delta
                    .extend(p.iter().zip(target).map(|(pi, ti)| pi * t_sum - ti));
                value
            }
            Loss::JensenShannon => {
                let mut value = 0.0;
                let mut grad_p = Vec::with_capacity(p.len());
                for (&pi, &ti) in p.iter().zip(target) {
                    let m = 0.5 * (pi + ti);
                    let (pf, mf) = (pi.max(JS_PROB_FLOOR), m.max(JS_PROB_FLOOR));
                    let (ln_p, ln_m) = (pf.ln(), mf.ln());
                    value += 0.5 * pi * (ln_p - ln_m);
                    if ti > 0.0 {
                        value += 0.5 * ti * (ti.ln() - ln_m);
                    }
                    let dp_clamp = if pi > JS_PROB_FLOOR { 1.0 / pf } else { 0.0 };
                    let dm_clamp = if m > JS_PROB_FLOOR { 0.5 / mf } else { 0.0 };
                    grad_p.push(0.5 * (ln_p - ln_m) + 0.5 * pi * (dp_clamp - dm_clamp) - 0.5 * ti * dm_clamp);
                }
                // softmax Jacobian: dz_i = p_i (g_i - sum_j p_j g_j)
                let inner: f64 = p.iter().zip(&grad_p).map(|(a, b)| a * b).sum();
                self.delta
                    .extend(p.iter().zip(&grad_p).map(|(pi, gi)| pi * (gi - inner)));
                value
            }
        }
    }

    /// Accumulates `scale * dL/dθ` into `grads`, consuming `self.delta`.
    fn backward(&mut self, net: &Network, grads: &mut Gradients, scale: f64) {
        let layers = net.layers();
        for i in (0..layers.len()).rev() {
            let layer = &layers[i];
            let g = &mut grads.layers[i];
            let input = &self.acts[i];
            for (o, d) in self.delta.iter().enumerate() {
                g.bias[o] += scale * d;
            }
            for (row, &a) in g.weights.chunks_exact_mut(layer.fan_out).zip(input) {
                if a == 0.0 {
                    continue;
                }
                let s = scale * a;
                for (w, d) in row.iter_mut().zip(&self.delta) {
                    *w += s * d;
                }
            }
            if i == 0 {
                break;
            }
            self.delta_prev.clear();
            self.delta_prev.resize(layer.fan_in, 0.0);
            for (j, (row, &a)) in layer.weights.chunks_exact(layer.fan_out).zip(input).enumerate() {
                // ReLU derivative: input[j] is the post-activation of the previous layer
                if a > 0.0 {
                    self.delta_prev[j] = row.iter().zip(&self.delta).map(|(w, d)| w * d).sum();
                }
            }
            std::mem::swap(&mut self.delta, &mut self.delta_prev);
        }
    }
}

fn check_example(net: &Network, x: &[f64], target: &[f64]) -> Result<()> {
    if x.len() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: x.len(),
        });
    }
    if target.len() != net.num_classes() {
        return Err(Error::DimensionMismatch {
            expected: net.num_classes(),
            got: target.len(),
        });
    }
    Ok(())
}

/// Loss of a single example, exactly the function [`analytic_gradient`]
/// differentiates.
pub fn loss_value(net: &Network, x: &[f64], target: &[f64], loss: Loss) -> Result<f64> {
    check_example(net, x, target)?;
    let mut trace = Trace::new(net);
    trace.forward(net, x);
    Ok(trace.loss_and_logit_grad(target, loss))
}

/// Backpropagated gradient of a single example's loss.
pub fn analytic_gradient(net: &Network, x: &[f64], target: &[f64], loss: Loss) -> Result<Gradients> {
    check_example(net, x, target)?;
    let mut trace = Trace::new(net);
    let mut grads = Gradients::zeros_like(net);
    trace.forward(net, x);
    trace.loss_and_logit_grad(target, loss);
    trace.backward(net, &mut grads, 1.0);
    Ok(grads)
}

/// First and second moment accumulators of Adam.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub first: Gradients,
    pub second: Gradients,
    pub step: u64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        Self {
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
            step: 0,
        }
    }

    fn update(&mut self, net: &mut Network, grads: &Gradients, lr: f64, b1: f64, b2: f64) {
        const EPS: f64 = 1e-8;
        self.step += 1;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for (((layer, g), m), v) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first.layers)
            .zip(&mut self.second.layers)
        {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let gs = g.weights.iter().chain(&g.bias);
            let ms = m.weights.iter_mut().chain(m.bias.iter_mut());
            let vs = v.weights.iter_mut().chain(v.bias.iter_mut());
            for (((p, g), m), v) in params.zip(gs).zip(ms).zip(vs) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
            }
        }
    }
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean example loss over each epoch, measured before each batch update.
    pub epoch_losses: Vec<f64>,
    pub learning_rates: Vec<f64>,
    /// Largest single-batch mean loss seen over the run.
    pub max_batch_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub report: TrainReport,
}

/// Trains `net` for `cfg.epochs` epochs. Single-threaded; the trajectory is
/// a pure function of `(net, data, loss, cfg)`.
pub fn train(mut net: Network, data: &TrainingData, loss: Loss, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.input_dim() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: data.input_dim(),
        });
    }
    if data.num_classes() != net.num_classes() {
        return Err(Error::DimensionMismatch {
            expected: net.num_classes(),
            got: data.num_classes(),
        });
    }

    let mut adam = AdamState::new(&net);
    let mut grads = Gradients::zeros_like(&net);
    let mut trace = Trace::new(&net);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut noisy = vec![0.0; data.input_dim()];
    let noise = cfg
        .gaussian_augmentation
        .map(|s| Normal::new(0.0, s).expect("validated sigma"));

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut stream_rng(cfg.seed, &[stream::SHUFFLE, epoch as u64]));
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            grads.clear();
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            let mut aug_rng = stream_rng(cfg.seed, &[stream::AUGMENT, epoch as u64, batch as u64]);
            for &i in chunk {
                let x = &data.inputs[i];
                match &noise {
                    Some(dist) => {
                        for (n, xi) in noisy.iter_mut().zip(x) {
                            *n = xi + dist.sample(&mut aug_rng);
                        }
                        trace.forward(&net, &noisy);
                    }
                    None => trace.forward(&net, x),
                }
                batch_loss += trace.loss_and_logit_grad(&data.targets[i], loss);
                trace.backward(&net, &mut grads, scale);
            }
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(Error::TrainingDiverged { epoch, batch });
            }
            report.max_batch_loss = report.max_batch_loss.max(batch_loss * scale);
            adam.update(&mut net, &grads, lr, cfg.adam_beta1, cfg.adam_beta2);
            epoch_loss += batch_loss;
        }
        report.epoch_losses.push(epoch_loss / data.len() as f64);
        report.learning_rates.push(lr);
    }
    Ok(TrainOutcome { network: net, report })
}
