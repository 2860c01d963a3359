//! Minimal dense-network engine: linear layers with LeakyReLU, softmax or
//! identity activations, cross-entropy and MSE losses, backprop, Adam and a
//! binary checkpoint format. Everything is `f64`.

mod adam;
mod checkpoint;
mod loss;
mod matrix;

pub use adam::AdamState;
pub use checkpoint::{load, read_net, save, write_net};
pub use loss::{cross_entropy, cross_entropy_probs, mse, LossOutput};
pub use matrix::Matrix;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Softmax,
    Identity,
}

impl Activation {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::LeakyRelu => 0,
            Activation::Softmax => 1,
            Activation::Identity => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::LeakyRelu),
            1 => Some(Activation::Softmax),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[inline]
pub fn leaky_relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

/// Row-wise numerically stable softmax, in place.
pub fn softmax_rows(m: &mut Matrix) {
    for row in m.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// One fully connected layer. `weights` is `out_dim x in_dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Layer>,
}

/// Per-layer values retained by [`DenseNet::forward`].
///
/// `activations[0]` is the batch input and `activations[k + 1]` the output of
/// layer `k`; `pre[k]` holds layer `k`'s pre-activation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub activations: Vec<Matrix>,
    pub pre: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("trace holds the input")
    }

    /// Input of the output layer (`h_t` for each sample).
    pub fn last_hidden(&self) -> &Matrix {
        &self.activations[self.activations.len() - 2]
    }

    pub fn batch_size(&self) -> usize {
        self.output().rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|g| g.weights.as_slice().iter().chain(g.bias.iter()).copied())
    }
}

impl DenseNet {
    /// Builds a network from `dims` (`len = layers + 1`) and one activation
    /// per layer. Weights are uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(dims: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::EmptyDims);
        }
        if activations.len() != dims.len() - 1 {
            return Err(Error::Shape(format!(
                "{} layer sizes need {} activations, got {}",
                dims.len(),
                dims.len() - 1,
                activations.len()
            )));
        }
        let mut rng = rng::stream(seed, &[rng::tag::INIT]);
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(pair, &activation)| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)).collect();
                Layer {
                    weights: Matrix::from_vec(fan_out, fan_in, data),
                    bias: vec![0.0; fan_out],
                    activation,
                }
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyDims);
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    k,
                    pair[0].out_dim(),
                    k + 1,
                    pair[1].in_dim()
                )));
            }
        }
        let last = layers.len() - 1;
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::Shape(format!("layer {k} bias length")));
            }
            if l.activation == Activation::Softmax && k != last {
                return Err(Error::Shape(format!(
                    "softmax only allowed on the final layer, found on layer {k}"
                )));
            }
        }
        Ok(DenseNet { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(Layer::out_dim))
            .collect()
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// True when both nets have the same layer sizes and activations.
    pub fn same_topology(&self, other: &DenseNet) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.in_dim() == b.in_dim() && a.out_dim() == b.out_dim() && a.activation == b.activation)
    }

    /// All parameters in layer order (weights row-major, then bias).
    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(l.bias.iter()).copied())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.as_mut_slice().iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn all_finite(&self) -> bool {
        self.params().all(f64::is_finite)
    }

    pub fn forward(&self, batch: &Matrix) -> Result<ForwardTrace> {
        if batch.cols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "input width {} does not match network input {}",
                batch.cols(),
                self.in_dim()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        activations.push(batch.clone());
        for layer in &self.layers {
            let input = activations.last().expect("nonempty");
            let z = linear(input, layer);
            let mut a = z.clone();
            match layer.activation {
                Activation::LeakyRelu => a.as_mut_slice().iter_mut().for_each(|v| *v = leaky_relu(*v)),
                Activation::Softmax => softmax_rows(&mut a),
                Activation::Identity => {}
            }
            pre.push(z);
            activations.push(a);
        }
        Ok(ForwardTrace { activations, pre })
    }

    /// Backpropagates `output_grad` through the trace.
    ///
    /// For a softmax output layer `output_grad` is taken with respect to the
    /// logits (the fused softmax/cross-entropy form that [`cross_entropy`]
    /// returns); otherwise it is with respect to the network output.
    pub fn backward(&self, trace: &ForwardTrace, output_grad: &Matrix) -> Result<Gradients> {
        if trace.pre.len() != self.layers.len() {
            return Err(Error::Shape("trace was produced by a different network".into()));
        }
        for (layer, z) in self.layers.iter().zip(&trace.pre) {
            if z.cols() != layer.out_dim() {
                return Err(Error::Shape("trace was produced by a different network".into()));
            }
        }
        let batch = trace.batch_size();
        if output_grad.rows() != batch || output_grad.cols() != self.out_dim() {
            return Err(Error::Shape(format!(
                "output gradient is {}x{}, expected {}x{}",
                output_grad.rows(),
                output_grad.cols(),
                batch,
                self.out_dim()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = output_grad.clone();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            if layer.activation == Activation::LeakyRelu {
                for (d, &z) in delta.as_mut_slice().iter_mut().zip(trace.pre[k].as_slice()) {
                    if z <= 0.0 {
                        *d *= LEAKY_SLOPE;
                    }
                }
            }
            let input = &trace.activations[k];
            let (out_dim, in_dim) = (layer.out_dim(), layer.in_dim());
            let mut gw = Matrix::zeros(out_dim, in_dim);
            let mut gb = vec![0.0; out_dim];
            let mut next = Matrix::zeros(batch, in_dim);
            for b in 0..batch {
                let x = input.row(b);
                let d_row = delta.row(b);
                let dx = next.row_mut(b);
                for o in 0..out_dim {
                    let d = d_row[o];
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    let w = layer.weights.row(o);
                    for ((g, &xi), (dxi, &wi)) in gw.row_mut(o).iter_mut().zip(x).zip(dx.iter_mut().zip(w)) {
                        *g += d * xi;
                        *dxi += d * wi;
                    }
                }
            }
            grads.push(LayerGrad { weights: gw, bias: gb });
            delta = next;
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }
}

fn linear(input: &Matrix, layer: &Layer) -> Matrix {
    let (batch, out_dim) = (input.rows(), layer.out_dim());
    let mut out = Matrix::zeros(batch, out_dim);
    for b in 0..batch {
        let x = input.row(b);
        let row = out.row_mut(b);
        for (o, slot) in row.iter_mut().enumerate() {
            let w = layer.weights.row(o);
            let mut acc = layer.bias[o];
            for (wi, xi) in w.iter().zip(x) {
                acc += wi * xi;
            }
            *slot = acc;
        }
    }
    out
}
