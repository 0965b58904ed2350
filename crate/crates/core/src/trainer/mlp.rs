//! Fully connected network with manual backpropagation.
//!
//! Batches are row-major: `B x in` inputs, `B x out` outputs. Layer `l`
//! computes `z = a W_l + b_l` with `W_l` of shape `in x out`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::invalid(format!("unknown activation '{other}' (relu or tanh)"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each linear layer; `inputs[0]` is the batch, `inputs[l]` for
    /// `l >= 1` is the post-activation output of hidden layer `l - 1`.
    pub inputs: Vec<DMatrix<f64>>,
    /// Pre-activations of the hidden layers.
    pub pre: Vec<DMatrix<f64>>,
    pub logits: DMatrix<f64>,
}

impl ForwardCache {
    /// Post-activation output of hidden layer `k` (`B x width`).
    pub fn hidden(&self, k: usize) -> &DMatrix<f64> {
        &self.inputs[k + 1]
    }

    pub fn hidden_count(&self) -> usize {
        self.pre.len()
    }
}

/// Parameter gradients, shaped like the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        flatten(&self.weights, &self.biases)
    }

    pub fn norm(&self) -> f64 {
        self.weights
            .iter()
            .map(|w| w.norm_squared())
            .sum::<f64>()
            .sqrt()
            .hypot(self.biases.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt())
    }

    pub fn scale(&mut self, s: f64) {
        self.weights.iter_mut().for_each(|w| *w *= s);
        self.biases.iter_mut().for_each(|b| *b *= s);
    }
}

fn flatten(weights: &[DMatrix<f64>], biases: &[DVector<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    for (w, b) in weights.iter().zip(biases) {
        for i in 0..w.nrows() {
            for j in 0..w.ncols() {
                out.push(w[(i, j)]);
            }
        }
        out.extend(b.iter());
    }
    out
}

impl Mlp {
    /// Glorot-uniform weights (He-uniform for relu) from the seed's init
    /// stream, zero biases.
    pub fn new(widths: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(widths, activation)?;
        let mut rng = stream(seed, Stream::Init);
        for w in &mut m.weights {
            let (fan_in, fan_out) = (w.nrows() as f64, w.ncols() as f64);
            let bound = match activation {
                Activation::Relu => (6.0 / fan_in).sqrt(),
                Activation::Tanh => (6.0 / (fan_in + fan_out)).sqrt(),
            };
            for v in w.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(m)
    }

    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid("a model needs at least input and output widths"));
        }
        if widths.contains(&0) {
            return Err(Error::invalid(format!("layer widths must be positive, got {widths:?}")));
        }
        let weights = widths.windows(2).map(|p| DMatrix::zeros(p[0], p[1])).collect();
        let biases = widths[1..].iter().map(|&w| DVector::zeros(w)).collect();
        Ok(Mlp { widths: widths.to_vec(), activation, weights, biases })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn hidden_count(&self) -> usize {
        self.widths.len() - 2
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[DVector<f64>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.biases
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Parameters in layer order: each weight matrix row-major, then its bias.
    pub fn params(&self) -> Vec<f64> {
        flatten(&self.weights, &self.biases)
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::shape(format!("{} values for {} parameters", values.len(), self.param_count())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameters".into()));
        }
        let mut it = values.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            for i in 0..w.nrows() {
                for j in 0..w.ncols() {
                    w[(i, j)] = it.next().unwrap();
                }
            }
            for v in b.iter_mut() {
                *v = it.next().unwrap();
            }
        }
        Ok(())
    }

    pub fn forward(&self, batch: &DMatrix<f64>) -> Result<ForwardCache> {
        if batch.ncols() != self.widths[0] {
            return Err(Error::shape(format!("batch has {} columns, model expects {}", batch.ncols(), self.widths[0])));
        }
        let layers = self.weights.len();
        let mut inputs = vec![batch.clone()];
        let mut pre = Vec::with_capacity(layers - 1);
        let mut logits = DMatrix::zeros(0, 0);
        for l in 0..layers {
            let mut z = &inputs[l] * &self.weights[l];
            for mut row in z.row_iter_mut() {
                row += self.biases[l].transpose();
            }
            if l + 1 == layers {
                logits = z;
            } else {
                let act = self.activation;
                inputs.push(z.map(|v| act.apply(v)));
                pre.push(z);
            }
        }
        Ok(ForwardCache { inputs, pre, logits })
    }

    /// Backpropagates `d_logits`, adding `hidden_grads[k]` (a gradient with
    /// respect to the post-activation output of hidden layer `k`) on the way.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_logits: &DMatrix<f64>,
        hidden_grads: &[(usize, DMatrix<f64>)],
    ) -> Gradients {
        let layers = self.weights.len();
        let mut weights = vec![DMatrix::zeros(0, 0); layers];
        let mut biases = vec![DVector::zeros(0); layers];
        let mut dz = d_logits.clone();
        for l in (0..layers).rev() {
            weights[l] = cache.inputs[l].transpose() * &dz;
            biases[l] = dz.row_sum().transpose();
            if l == 0 {
                break;
            }
            let mut da = &dz * self.weights[l].transpose();
            for (k, g) in hidden_grads {
                if *k == l - 1 {
                    da += g;
                }
            }
            let (z, a) = (&cache.pre[l - 1], &cache.inputs[l]);
            let act = self.activation;
            dz = DMatrix::from_fn(da.nrows(), da.ncols(), |i, j| da[(i, j)] * act.derivative(z[(i, j)], a[(i, j)]));
        }
        Gradients { weights, biases }
    }
}

/// Mean softmax cross-entropy and its gradient `(softmax - onehot) / B`.
pub fn task_loss(logits: &DMatrix<f64>, labels: &[usize]) -> Result<(f64, DMatrix<f64>)> {
    let (b, classes) = logits.shape();
    if labels.len() != b {
        return Err(Error::shape(format!("{} labels for {b} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::invalid(format!("label {bad} out of range for {classes} classes")));
    }
    let mut grad = DMatrix::zeros(b, classes);
    let mut loss = 0.0;
    for i in 0..b {
        let row = logits.row(i);
        let max = row.max();
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[labels[i]];
        for j in 0..classes {
            grad[(i, j)] = (row[j] - log_z).exp() / b as f64;
        }
        grad[(i, labels[i])] -= 1.0 / b as f64;
    }
    Ok((loss / b as f64, grad))
}

pub fn predict(logits: &DMatrix<f64>) -> Vec<usize> {
    logits.row_iter().map(|r| r.transpose().argmax().0).collect()
}

pub fn accuracy(logits: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let hits = predict(logits).iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len().max(1) as f64
}
