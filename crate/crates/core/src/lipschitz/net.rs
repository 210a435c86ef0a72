//! Small fully connected networks with per-layer Lipschitz constants, weight
//! projection and hand-written backpropagation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

/// Norm used for layer constants: `‖·‖_1`, `‖·‖_2` or `‖·‖_∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Norm {
    L1,
    L2,
    LInf,
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "l1" => Ok(Norm::L1),
            "2" | "l2" => Ok(Norm::L2),
            "inf" | "infinity" | "linf" | "max" => Ok(Norm::LInf),
            other => Err(Error::UnsupportedNorm(other.to_string())),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L1 => "1",
            Norm::L2 => "2",
            Norm::LInf => "inf",
        })
    }
}

impl Norm {
    pub fn vector(&self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::LInf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Dense row-major matrix; row `j` holds the weights of output unit `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidNetwork("ragged matrix".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.cols..(j + 1) * self.cols]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|j| self.row(j).iter().zip(x).map(|(w, v)| w * v).sum())
            .collect()
    }

    /// Table-1 constant of `x ↦ Wx` under `norm`:
    /// `Σ_j ‖W_j‖_∞` (p=1), `sqrt(Σ_j ‖W_j‖_2²)` (p=2), `max_j ‖W_j‖_1` (p=∞).
    pub fn lipschitz(&self, norm: Norm) -> f64 {
        let rows = (0..self.rows).map(|j| self.row(j));
        match norm {
            Norm::L1 => rows.map(|r| Norm::LInf.vector(r)).sum(),
            Norm::L2 => rows
                .map(|r| r.iter().map(|x| x * x).sum::<f64>())
                .sum::<f64>()
                .sqrt(),
            Norm::LInf => rows.map(|r| Norm::L1.vector(r)).fold(0.0, f64::max),
        }
    }

    /// Rescales so that [`Matrix::lipschitz`] is at most `cap`. For p=∞ only
    /// the rows whose 1-norm exceeds `cap` are scaled; for p=1 and p=2 the
    /// constant couples all rows, so the whole matrix is scaled.
    pub fn project(&mut self, norm: Norm, cap: f64) {
        match norm {
            Norm::LInf => {
                let cols = self.cols;
                for row in self.data.chunks_mut(cols) {
                    let l1 = Norm::L1.vector(row);
                    if l1 > cap {
                        let s = cap / l1;
                        row.iter_mut().for_each(|w| *w *= s);
                    }
                }
            }
            Norm::L1 | Norm::L2 => {
                let k = self.lipschitz(norm);
                if k > cap {
                    let s = cap / k;
                    self.data.iter_mut().for_each(|w| *w *= s);
                }
            }
        }
    }

    /// Clips every entry into `[-cap, cap]`.
    pub fn clip(&mut self, cap: f64) {
        self.data.iter_mut().for_each(|w| *w = w.clamp(-cap, cap));
    }
}

/// One primitive from the layer-constant table.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerOp {
    MatMul(Matrix),
    AddBias(Vec<f64>),
    Relu,
}

impl LayerOp {
    pub fn lipschitz(&self, norm: Norm) -> f64 {
        match self {
            LayerOp::MatMul(w) => w.lipschitz(norm),
            LayerOp::AddBias(_) | LayerOp::Relu => 1.0,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            LayerOp::MatMul(w) => w.apply(x),
            LayerOp::AddBias(b) => x.iter().zip(b).map(|(v, c)| v + c).collect(),
            LayerOp::Relu => x.iter().map(|v| v.max(0.0)).collect(),
        }
    }
}

/// `x ↦ act(Wx + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows {
            return Err(Error::InvalidNetwork(format!(
                "bias length {} does not match {} output units",
                bias.len(),
                weights.rows
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn ops(&self) -> Vec<LayerOp> {
        let mut ops = vec![
            LayerOp::MatMul(self.weights.clone()),
            LayerOp::AddBias(self.bias.clone()),
        ];
        if self.activation == Activation::Relu {
            ops.push(LayerOp::Relu);
        }
        ops
    }

    pub fn n_in(&self) -> usize {
        self.weights.cols
    }

    pub fn n_out(&self) -> usize {
        self.weights.rows
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.weights.apply(x);
        for (zi, b) in z.iter_mut().zip(&self.bias) {
            *zi += b;
            if self.activation == Activation::Relu && *zi < 0.0 {
                *zi = 0.0;
            }
        }
        z
    }
}

/// A stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredNet {
    layers: Vec<Layer>,
}

/// Gradient with the same shape as a [`LayeredNet`]: `(dW, db)` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGradient {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl NetGradient {
    pub fn zeros_like(net: &LayeredNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.data.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }
}

impl LayeredNet {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("no layers".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(Error::InvalidNetwork(format!(
                    "layer {k} outputs {} units but layer {} expects {}",
                    pair[0].n_out(),
                    k + 1,
                    pair[1].n_in()
                )));
            }
        }
        if layers
            .iter()
            .any(|l| l.weights.data.iter().chain(&l.bias).any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidNetwork("non-finite parameter".into()));
        }
        Ok(Self { layers })
    }

    /// `widths = [in, hidden..., out]`, ReLU on hidden layers, identity on the
    /// output, weights uniform in `[-0.5, 0.5] / sqrt(fan_in)`, zero biases.
    pub fn random<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidNetwork(
                "need at least input and output widths".into(),
            ));
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (k, w) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = 1.0 / (fan_in as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-0.5..=0.5) * scale)
                .collect();
            let activation = if k + 2 == widths.len() {
                Activation::Identity
            } else {
                Activation::Relu
            };
            layers.push(Layer::new(
                Matrix::new(fan_out, fan_in, data)?,
                vec![0.0; fan_out],
                activation,
            )?);
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn n_out(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.layers
            .iter()
            .fold(x.to_vec(), |h, layer| layer.forward(&h))
    }

    /// Scalar-in, scalar-out convenience.
    pub fn eval_scalar(&self, x: f64) -> f64 {
        self.forward(&[x])[0]
    }

    /// Accumulates `scale · Jᵀ out_grad` into `grad`, where `J` is the
    /// Jacobian of the output with respect to the parameters at input `x`.
    pub fn accumulate_gradient(
        &self,
        x: &[f64],
        out_grad: &[f64],
        scale: f64,
        grad: &mut NetGradient,
    ) {
        // Forward with cached layer inputs and pre-activations.
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let mut z = layer.weights.apply(&h);
            for (zi, b) in z.iter_mut().zip(&layer.bias) {
                *zi += b;
            }
            let next = match layer.activation {
                Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
                Activation::Identity => z.clone(),
            };
            inputs.push(std::mem::replace(&mut h, next));
            pre.push(z);
        }

        let mut delta: Vec<f64> = out_grad.iter().map(|g| g * scale).collect();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation == Activation::Relu {
                for (d, z) in delta.iter_mut().zip(&pre[k]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let (dw, db) = &mut grad.layers[k];
            let cols = layer.weights.cols;
            for (j, &dj) in delta.iter().enumerate() {
                db[j] += dj;
                if dj != 0.0 {
                    for (i, &xi) in inputs[k].iter().enumerate() {
                        dw[j * cols + i] += dj * xi;
                    }
                }
            }
            if k > 0 {
                let mut prev = vec![0.0; cols];
                for (j, &dj) in delta.iter().enumerate() {
                    if dj != 0.0 {
                        for (p, w) in prev.iter_mut().zip(layer.weights.row(j)) {
                            *p += dj * w;
                        }
                    }
                }
                delta = prev;
            }
        }
    }

    /// `θ ← θ - lr · grad`.
    pub fn apply_gradient(&mut self, grad: &NetGradient, lr: f64) {
        for (layer, (dw, db)) in self.layers.iter_mut().zip(&grad.layers) {
            for (w, g) in layer.weights.data.iter_mut().zip(dw) {
                *w -= lr * g;
            }
            for (b, g) in layer.bias.iter_mut().zip(db) {
                *b -= lr * g;
            }
        }
    }

    /// Projects every weight matrix onto `{W : K_p(W) <= cap}`.
    pub fn project(&mut self, norm: Norm, cap: f64) {
        for layer in &mut self.layers {
            layer.weights.project(norm, cap);
        }
    }

    pub fn clip(&mut self, cap: f64) {
        for layer in &mut self.layers {
            layer.weights.clip(cap);
        }
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.data.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            for w in layer.weights.data.iter_mut().chain(layer.bias.iter_mut()) {
                *w = it.next().expect("parameter count");
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data.len() + l.bias.len())
            .sum()
    }
}
