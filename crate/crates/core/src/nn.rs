//! Minimal dense-network engine: seeded init, forward, backward, SGD, eval.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::WeightMatrix;

/// Element-wise activation applied after the affine transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn forward(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed in terms of the post-activation output.
    #[inline]
    pub fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

/// One dense layer: `y = activation(x W + b)`.
///
/// Weights are `in_dim x out_dim` row-major, so row `i` holds the fan-out
/// of input `i`; biases have length `out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: WeightMatrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: WeightMatrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::ShapeMismatch(format!(
                "bias length {} does not match layer output size {}",
                bias.len(),
                weights.cols()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }
}

/// An ordered stack of dense layers; layer 0 is the input-side layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    /// Builds a network from layers, checking that dimensions chain.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArchitecture("no layers".into()));
        }
        for i in 1..layers.len() {
            if layers[i - 1].out_dim() != layers[i].in_dim() {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {} output size {} does not match layer {} input size {}",
                    i - 1,
                    layers[i - 1].out_dim(),
                    i,
                    layers[i].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }
}

/// Classification dataset: feature vectors plus one-hot targets.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, classes: usize) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} inputs vs {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if let Some(first) = inputs.first() {
            let dim = first.len();
            if inputs.iter().any(|x| x.len() != dim) {
                return Err(Error::ShapeMismatch("ragged input dimensions".into()));
            }
        }
        for t in &targets {
            if t.len() != classes {
                return Err(Error::ShapeMismatch(format!(
                    "target length {} vs {} classes",
                    t.len(),
                    classes
                )));
            }
            let ones = t.iter().filter(|&&v| v == 1.0).count();
            let zeros = t.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || zeros != classes - 1 {
                return Err(Error::ShapeMismatch("target is not one-hot".into()));
            }
        }
        Ok(Self {
            inputs,
            targets,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Training hyperparameters shared by plain and regularized training.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Initial penalty weight; zero disables the regularizer.
    pub alpha0: f64,
    /// Multiplicative barrier constant applied once per mini-batch.
    pub barrier_c: f64,
    pub seed: u64,
    /// Layer indices the binarization penalty applies to (sorted, deduped).
    pub regularized_layers: Vec<usize>,
}

impl TrainConfig {
    pub fn validate(&self, net: &Network) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be positive".into()));
        }
        if self.alpha0 < 0.0 || !self.alpha0.is_finite() {
            return Err(Error::InvalidConfig("alpha0 must be non-negative".into()));
        }
        if self.barrier_c < 1.0 || !self.barrier_c.is_finite() {
            return Err(Error::InvalidConfig("barrier constant must be >= 1".into()));
        }
        for &idx in &self.regularized_layers {
            if idx >= net.num_layers() {
                return Err(Error::InvalidConfig(format!(
                    "regularized layer {idx} out of range for {} layers",
                    net.num_layers()
                )));
            }
        }
        Ok(())
    }
}

/// Per-layer activations from a forward pass; `values[0]` is the input
/// itself and `values[i + 1]` the post-activation output of layer `i`.
#[derive(Debug, Clone)]
pub struct Activations {
    pub values: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.values.last().unwrap()
    }
}

/// Gradients of the data loss, shaped like the network parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<WeightMatrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            weights: net
                .layers()
                .iter()
                .map(|l| WeightMatrix::zeros(l.in_dim(), l.out_dim()))
                .collect(),
            biases: net.layers().iter().map(|l| vec![0.0; l.out_dim()]).collect(),
        }
    }

    pub fn zero(&mut self) {
        for w in &mut self.weights {
            w.values_mut().fill(0.0);
        }
        for b in &mut self.biases {
            b.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            for v in w.values_mut() {
                *v *= factor;
            }
        }
        for b in &mut self.biases {
            for v in b.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.values_mut().iter_mut().zip(b.values()) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Builds a seeded network: Glorot-uniform weights, zero biases, ReLU
/// hidden layers, sigmoid output. Identical seeds give bit-identical
/// networks (draws are rounded to f32 so saved models round-trip exactly).
pub fn init_network(layer_sizes: &[usize], seed: u64) -> Result<Network> {
    if layer_sizes.len() < 3 {
        return Err(Error::InvalidArchitecture(format!(
            "need at least 3 layer sizes (input, hidden, output), got {}",
            layer_sizes.len()
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::InvalidArchitecture("layer size of zero".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_layers = layer_sizes.len() - 1;
    let mut layers = Vec::with_capacity(num_layers);
    for i in 0..num_layers {
        let (fan_in, fan_out) = (layer_sizes[i], layer_sizes[i + 1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new(-limit, limit);
        let values: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| dist.sample(&mut rng) as f32 as f64)
            .collect();
        let activation = if i + 1 == num_layers {
            Activation::Sigmoid
        } else {
            Activation::Relu
        };
        layers.push(Layer::new(
            WeightMatrix::new(fan_in, fan_out, values)?,
            vec![0.0; fan_out],
            activation,
        )?);
    }
    Network::new(layers)
}

/// Forward pass retaining every intermediate activation for backward.
pub fn forward(net: &Network, input: &[f64]) -> Result<Activations> {
    if input.len() != net.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "input length {} vs network input size {}",
            input.len(),
            net.input_dim()
        )));
    }
    let mut values = Vec::with_capacity(net.num_layers() + 1);
    values.push(input.to_vec());
    for layer in net.layers() {
        let x = values.last().unwrap();
        let mut z = layer.bias.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue; // ReLU outputs and dark pixels are mostly zero
            }
            for (zj, &wij) in z.iter_mut().zip(layer.weights.row(i)) {
                *zj += xi * wij;
            }
        }
        for v in z.iter_mut() {
            *v = layer.activation.forward(*v);
        }
        values.push(z);
    }
    Ok(Activations { values })
}

/// Euclidean distance between output and target (the per-example data
/// term; the norm itself, not its square).
pub fn data_loss(output: &[f64], target: &[f64]) -> Result<f64> {
    if output.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "output length {} vs target length {}",
            output.len(),
            target.len()
        )));
    }
    Ok(output
        .iter()
        .zip(target)
        .map(|(o, t)| (o - t) * (o - t))
        .sum::<f64>()
        .sqrt())
}

/// Backpropagates the data loss through the network.
///
/// The norm is non-differentiable when output equals target; the zero
/// subgradient is returned there.
pub fn backward(net: &Network, acts: &Activations, target: &[f64]) -> Result<Gradients> {
    let mut grads = Gradients::zeros_like(net);
    backward_into(net, acts, target, &mut grads)?;
    Ok(grads)
}

/// Like [`backward`], but adds the example's gradients into an existing
/// accumulator. Mini-batch training uses this to avoid reallocating
/// gradient buffers per example.
pub fn backward_into(
    net: &Network,
    acts: &Activations,
    target: &[f64],
    grads: &mut Gradients,
) -> Result<()> {
    if acts.values.len() != net.num_layers() + 1 {
        return Err(Error::ShapeMismatch(format!(
            "activations hold {} stages, network needs {}",
            acts.values.len(),
            net.num_layers() + 1
        )));
    }
    for (i, layer) in net.layers().iter().enumerate() {
        if acts.values[i].len() != layer.in_dim() || acts.values[i + 1].len() != layer.out_dim() {
            return Err(Error::ShapeMismatch(format!(
                "stale activations at layer {i}"
            )));
        }
    }
    if grads.weights.len() != net.num_layers() {
        return Err(Error::ShapeMismatch("gradient accumulator mismatch".into()));
    }
    let output = acts.output();
    let loss = data_loss(output, target)?;

    // dL/dy for L = ||y - t||: (y - t) / L, zero at the minimum.
    let mut delta: Vec<f64> = if loss == 0.0 {
        vec![0.0; output.len()]
    } else {
        output.iter().zip(target).map(|(o, t)| (o - t) / loss).collect()
    };

    for (idx, layer) in net.layers().iter().enumerate().rev() {
        let x = &acts.values[idx];
        let y = &acts.values[idx + 1];
        // Through the activation.
        let dz: Vec<f64> = delta
            .iter()
            .zip(y)
            .map(|(d, &yv)| d * layer.activation.grad_from_output(yv))
            .collect();
        let gw = &mut grads.weights[idx];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (g, &dzj) in gw.row_mut(i).iter_mut().zip(&dz) {
                *g += xi * dzj;
            }
        }
        for (b, &dzj) in grads.biases[idx].iter_mut().zip(&dz) {
            *b += dzj;
        }
        if idx > 0 {
            delta = (0..layer.in_dim())
                .map(|i| {
                    layer
                        .weights
                        .row(i)
                        .iter()
                        .zip(&dz)
                        .map(|(&w, &d)| w * d)
                        .sum()
                })
                .collect();
        }
    }
    Ok(())
}

/// One SGD update: `w <- w - lr * g` element-wise, biases alike.
pub fn sgd_step(net: &mut Network, grads: &Gradients, learning_rate: f64) -> Result<()> {
    if grads.weights.len() != net.num_layers() {
        return Err(Error::ShapeMismatch(format!(
            "{} gradient layers vs {} network layers",
            grads.weights.len(),
            net.num_layers()
        )));
    }
    for (layer, (gw, gb)) in net
        .layers
        .iter_mut()
        .zip(grads.weights.iter().zip(&grads.biases))
    {
        if gw.rows() != layer.in_dim() || gw.cols() != layer.out_dim() {
            return Err(Error::ShapeMismatch("gradient shape mismatch".into()));
        }
        if !gw.is_finite() || gb.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow("non-finite gradient".into()));
        }
        for (w, g) in layer.weights.values_mut().iter_mut().zip(gw.values()) {
            *w -= learning_rate * g;
        }
        for (b, g) in layer.bias.iter_mut().zip(gb) {
            *b -= learning_rate * g;
        }
    }
    Ok(())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Fraction of examples whose predicted class differs from the label.
pub fn evaluate(net: &Network, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput("cannot evaluate on empty dataset".into()));
    }
    let mut wrong = 0usize;
    for (x, t) in data.inputs.iter().zip(&data.targets) {
        let acts = forward(net, x)?;
        if argmax(acts.output()) != argmax(t) {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / data.len() as f64)
}
