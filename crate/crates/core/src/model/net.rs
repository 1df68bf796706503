use crate::error::{Error, Result};
use crate::numerics::{frobenius_sq, matmul, matmul_nt, matmul_tn, DenseMatrix, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative at `z`; the ReLU subgradient at 0 is 0.
    #[inline]
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

/// One fully connected layer: `act(W x + b)`, with `W` shaped `out x in`
/// and `b` shaped `out x 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: DenseMatrix,
    pub bias: DenseMatrix,
    pub activation: Activation,
}

/// Stack of fully connected layers, ReLU between layers and identity on
/// the output.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedForwardNet {
    layers: Vec<Layer>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct NetCache {
    /// Input of each layer (`inputs[0]` is the batch itself).
    inputs: Vec<DenseMatrix>,
    /// Pre-activation of each layer.
    pre: Vec<DenseMatrix>,
    output: DenseMatrix,
}

impl NetCache {
    pub fn output(&self) -> &DenseMatrix {
        &self.output
    }

    pub fn batch_size(&self) -> usize {
        self.output.cols()
    }

    pub fn pre_activations(&self) -> &[DenseMatrix] {
        &self.pre
    }
}

/// Gradients for every weight and bias, layer by layer.
#[derive(Clone, Debug, PartialEq)]
pub struct NetGradients {
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<DenseMatrix>,
}

impl NetGradients {
    pub fn norm_sq(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.biases)
            .map(frobenius_sq)
            .sum()
    }

    pub fn scale(&mut self, k: f64) {
        for m in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            *m = m.scale(k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .all(DenseMatrix::is_finite)
    }

    /// Layer-major flattening: `W0, b0, W1, b1, ...`.
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
    }
}

impl FeedForwardNet {
    /// `dims = [input, hidden..., output]`. Weights are uniform in
    /// `±1/sqrt(fan_in)`, biases zero.
    pub fn new(dims: &[usize], rng: &mut SeededRng) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Invalid(format!("invalid layer sizes {dims:?}")));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                Layer {
                    weight: DenseMatrix::random_uniform(
                        fan_out,
                        fan_in,
                        1.0 / (fan_in as f64).sqrt(),
                        rng,
                    ),
                    bias: DenseMatrix::zeros(fan_out, 1),
                    activation: if i == last {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    },
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Invalid("a net needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.shape() != (l.weight.rows(), 1) {
                return Err(Error::shape("layer bias", l.weight.shape(), l.bias.shape()));
            }
            if i > 0 && layers[i - 1].weight.rows() != l.weight.cols() {
                return Err(Error::shape(
                    "layer chain",
                    layers[i - 1].weight.shape(),
                    l.weight.shape(),
                ));
            }
        }
        if layers.last().map(|l| l.activation) != Some(Activation::Identity) {
            return Err(Error::Invalid("the output layer must be linear".into()));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.rows()
    }

    /// `[input, hidden..., output]`
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.weight.rows()));
        d
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.rows())
            .sum()
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<NetCache> {
        if x.rows() != self.input_dim() {
            return Err(Error::shape(
                "net input",
                (self.input_dim(), x.cols()),
                x.shape(),
            ));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for layer in &self.layers {
            let mut z = matmul(&layer.weight, &current)?;
            let cols = z.cols();
            for (r, chunk) in z.as_mut_slice().chunks_mut(cols.max(1)).enumerate() {
                let b = layer.bias.get(r, 0);
                chunk.iter_mut().for_each(|v| *v += b);
            }
            let a = z.map(|v| layer.activation.apply(v));
            inputs.push(current);
            pre.push(z);
            current = a;
        }
        Ok(NetCache {
            inputs,
            pre,
            output: current,
        })
    }

    /// Parameter gradients given `dJ/d(output)`.
    pub fn backprop(&self, cache: &NetCache, grad_out: &DenseMatrix) -> Result<NetGradients> {
        if grad_out.shape() != cache.output.shape() {
            return Err(Error::shape(
                "backprop",
                cache.output.shape(),
                grad_out.shape(),
            ));
        }
        let n = self.layers.len();
        let mut weights = vec![DenseMatrix::zeros(0, 0); n];
        let mut biases = vec![DenseMatrix::zeros(0, 0); n];
        let mut delta = grad_out.clone();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            if layer.activation != Activation::Identity {
                delta = delta.zip_with(&cache.pre[l], "activation grad", |g, z| {
                    g * layer.activation.derivative(z)
                })?;
            }
            weights[l] = matmul_nt(&delta, &cache.inputs[l])?;
            biases[l] = delta.row_sums();
            if l > 0 {
                delta = matmul_tn(&layer.weight, &delta)?;
            }
        }
        Ok(NetGradients { weights, biases })
    }

    /// `p <- p - lr * g` for every weight and bias.
    pub fn apply_gradients(&mut self, grads: &NetGradients, lr: f64) -> Result<()> {
        for (layer, (gw, gb)) in self
            .layers
            .iter_mut()
            .zip(grads.weights.iter().zip(&grads.biases))
        {
            layer.weight.add_scaled(-lr, gw)?;
            layer.bias.add_scaled(-lr, gb)?;
        }
        Ok(())
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(l.bias.as_slice());
        }
    }

    /// Inverse of [`flatten_into`](Self::flatten_into); returns the number
    /// of values consumed.
    pub fn unflatten_from(&mut self, values: &[f64]) -> usize {
        let mut at = 0;
        for l in &mut self.layers {
            for m in [&mut l.weight, &mut l.bias] {
                let len = m.as_slice().len();
                m.as_mut_slice().copy_from_slice(&values[at..at + len]);
                at += len;
            }
        }
        at
    }
}
