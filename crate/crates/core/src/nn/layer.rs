use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::linalg::Matrix;
use crate::{math, Error, Result};

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A trainable tensor and its most recent gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Matrix,
    pub grad: Matrix,
}

impl Param {
    pub fn new(value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Self { value, grad }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerSpec {
    Linear { input: usize, output: usize },
    BatchNorm { width: usize },
    LeakyRelu { slope: f64 },
    Selu,
    Dropout { p: f64 },
}

/// Fully connected layer `y = xW + b` with `W` stored `input × output`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    input: Option<Matrix>,
}

impl Linear {
    /// Kaiming-uniform (fan-in) weights and zero bias.
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = math::sqrt(6.0 / input.max(1) as f64);
        let w = Matrix::from_fn(input, output, |_, _| rng.random_range(-bound..bound));
        Self::from_params(w, Matrix::zeros(1, output))
    }

    pub fn from_params(weight: Matrix, bias: Matrix) -> Self {
        Self { weight: Param::new(weight), bias: Param::new(bias), input: None }
    }

    fn forward(&mut self, x: &Matrix) -> Matrix {
        let mut y = x.matmul(&self.weight.value);
        let b = self.bias.value.row(0);
        for r in 0..y.rows() {
            for (v, bv) in y.row_mut(r).iter_mut().zip(b) {
                *v += bv;
            }
        }
        self.input = Some(x.clone());
        y
    }

    fn backward(&mut self, g: &Matrix) -> Result<Matrix> {
        let x = self.input.as_ref().ok_or(Error::MissingForward)?;
        self.weight.grad = x.t_matmul(g);
        let mut gb = Matrix::zeros(1, g.cols());
        for r in 0..g.rows() {
            for (a, v) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                *a += v;
            }
        }
        self.bias.grad = gb;
        Ok(g.matmul_t(&self.weight.value))
    }
}

/// Per-feature batch standardization with running statistics.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<(Matrix, Vec<f64>, Mode)>,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: Param::new(Matrix::new(1, width, vec![1.0; width]).expect("shape")),
            beta: Param::new(Matrix::zeros(1, width)),
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    fn width(&self) -> usize {
        self.running_mean.len()
    }

    fn forward(&mut self, x: &Matrix, mode: Mode) -> Matrix {
        let (n, w) = (x.rows(), x.cols());
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; w];
                for r in 0..n {
                    for (m, v) in mean.iter_mut().zip(x.row(r)) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0; w];
                for r in 0..n {
                    for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= n as f64);
                let unbias = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
                for c in 0..w {
                    self.running_mean[c] = (1.0 - self.momentum) * self.running_mean[c] + self.momentum * mean[c];
                    self.running_var[c] = (1.0 - self.momentum) * self.running_var[c] + self.momentum * var[c] * unbias;
                }
                (mean, var)
            }
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / math::sqrt(v + self.eps)).collect();
        let mut x_hat = Matrix::zeros(n, w);
        let mut y = Matrix::zeros(n, w);
        let (gamma, beta) = (self.gamma.value.row(0), self.beta.value.row(0));
        for r in 0..n {
            let xr = x.row(r);
            let hr = x_hat.row_mut(r);
            for c in 0..w {
                hr[c] = (xr[c] - mean[c]) * inv_std[c];
            }
            let yr = y.row_mut(r);
            for c in 0..w {
                yr[c] = gamma[c] * x_hat.get(r, c) + beta[c];
            }
        }
        self.cache = Some((x_hat, inv_std, mode));
        y
    }

    fn backward(&mut self, g: &Matrix) -> Result<Matrix> {
        let (x_hat, inv_std, mode) = self.cache.as_ref().ok_or(Error::MissingForward)?;
        let (n, w) = (g.rows(), g.cols());
        let mut sum_g = vec![0.0; w];
        let mut sum_gx = vec![0.0; w];
        for r in 0..n {
            for c in 0..w {
                sum_g[c] += g.get(r, c);
                sum_gx[c] += g.get(r, c) * x_hat.get(r, c);
            }
        }
        self.gamma.grad = Matrix::new(1, w, sum_gx.clone())?;
        self.beta.grad = Matrix::new(1, w, sum_g.clone())?;
        let gamma = self.gamma.value.row(0);
        let mut dx = Matrix::zeros(n, w);
        let nf = n as f64;
        for r in 0..n {
            for c in 0..w {
                let v = match mode {
                    Mode::Train => {
                        gamma[c] * inv_std[c] / nf * (nf * g.get(r, c) - sum_g[c] - x_hat.get(r, c) * sum_gx[c])
                    }
                    Mode::Eval => g.get(r, c) * gamma[c] * inv_std[c],
                };
                dx.set(r, c, v);
            }
        }
        Ok(dx)
    }
}

/// `max(x, slope·x)`
#[derive(Clone, Debug)]
pub struct LeakyRelu {
    pub slope: f64,
    input: Option<Matrix>,
}

impl LeakyRelu {
    pub fn new(slope: f64) -> Self {
        Self { slope, input: None }
    }

    fn forward(&mut self, x: &Matrix) -> Matrix {
        let mut y = x.clone();
        for v in y.as_mut_slice() {
            if *v < 0.0 {
                *v *= self.slope;
            }
        }
        self.input = Some(x.clone());
        y
    }

    fn backward(&mut self, g: &Matrix) -> Result<Matrix> {
        let x = self.input.as_ref().ok_or(Error::MissingForward)?;
        let mut dx = g.clone();
        for (d, v) in dx.as_mut_slice().iter_mut().zip(x.as_slice()) {
            if *v < 0.0 {
                *d *= self.slope;
            }
        }
        Ok(dx)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Selu {
    input: Option<Matrix>,
}

impl Selu {
    #[inline]
    pub fn value(x: f64) -> f64 {
        if x > 0.0 {
            SELU_LAMBDA * x
        } else {
            SELU_LAMBDA * SELU_ALPHA * math::expm1(x)
        }
    }

    #[inline]
    pub fn derivative(x: f64) -> f64 {
        if x > 0.0 {
            SELU_LAMBDA
        } else {
            SELU_LAMBDA * SELU_ALPHA * math::exp(x)
        }
    }

    fn forward(&mut self, x: &Matrix) -> Matrix {
        let mut y = x.clone();
        y.as_mut_slice().iter_mut().for_each(|v| *v = Self::value(*v));
        self.input = Some(x.clone());
        y
    }

    fn backward(&mut self, g: &Matrix) -> Result<Matrix> {
        let x = self.input.as_ref().ok_or(Error::MissingForward)?;
        let mut dx = g.clone();
        for (d, v) in dx.as_mut_slice().iter_mut().zip(x.as_slice()) {
            *d *= Self::derivative(*v);
        }
        Ok(dx)
    }
}

/// Inverted dropout: scales kept units by `1/(1-p)` in training, identity in
/// evaluation.
#[derive(Clone, Debug)]
pub struct Dropout {
    pub p: f64,
    mask: Option<Option<Vec<f64>>>,
}

impl Dropout {
    pub fn new(p: f64) -> Self {
        Self { p, mask: None }
    }

    fn forward<R: Rng + ?Sized>(&mut self, x: &Matrix, mode: Mode, rng: &mut R) -> Matrix {
        if mode == Mode::Eval || self.p <= 0.0 {
            self.mask = Some(None);
            return x.clone();
        }
        let keep = 1.0 - self.p;
        let mask: Vec<f64> =
            (0..x.as_slice().len()).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        let mut y = x.clone();
        for (v, m) in y.as_mut_slice().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.mask = Some(Some(mask));
        y
    }

    fn backward(&mut self, g: &Matrix) -> Result<Matrix> {
        match self.mask.as_ref().ok_or(Error::MissingForward)? {
            None => Ok(g.clone()),
            Some(mask) => {
                let mut dx = g.clone();
                for (d, m) in dx.as_mut_slice().iter_mut().zip(mask) {
                    *d *= m;
                }
                Ok(dx)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum Layer {
    Linear(Linear),
    BatchNorm(BatchNorm),
    LeakyRelu(LeakyRelu),
    Selu(Selu),
    Dropout(Dropout),
}

impl Layer {
    pub fn from_spec<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Self {
        match spec {
            LayerSpec::Linear { input, output } => Layer::Linear(Linear::new(input, output, rng)),
            LayerSpec::BatchNorm { width } => Layer::BatchNorm(BatchNorm::new(width)),
            LayerSpec::LeakyRelu { slope } => Layer::LeakyRelu(LeakyRelu::new(slope)),
            LayerSpec::Selu => Layer::Selu(Selu::default()),
            LayerSpec::Dropout { p } => Layer::Dropout(Dropout::new(p)),
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Linear(l) => LayerSpec::Linear { input: l.weight.value.rows(), output: l.weight.value.cols() },
            Layer::BatchNorm(b) => LayerSpec::BatchNorm { width: b.width() },
            Layer::LeakyRelu(l) => LayerSpec::LeakyRelu { slope: l.slope },
            Layer::Selu(_) => LayerSpec::Selu,
            Layer::Dropout(d) => LayerSpec::Dropout { p: d.p },
        }
    }

    pub fn forward<R: Rng + ?Sized>(&mut self, x: &Matrix, mode: Mode, rng: &mut R) -> Matrix {
        match self {
            Layer::Linear(l) => l.forward(x),
            Layer::BatchNorm(b) => b.forward(x, mode),
            Layer::LeakyRelu(l) => l.forward(x),
            Layer::Selu(s) => s.forward(x),
            Layer::Dropout(d) => d.forward(x, mode, rng),
        }
    }

    pub fn backward(&mut self, g: &Matrix) -> Result<Matrix> {
        match self {
            Layer::Linear(l) => l.backward(g),
            Layer::BatchNorm(b) => b.backward(g),
            Layer::LeakyRelu(l) => l.backward(g),
            Layer::Selu(s) => s.backward(g),
            Layer::Dropout(d) => d.backward(g),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(b) => vec![&mut b.gamma, &mut b.beta],
            _ => Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(b) => vec![&b.gamma, &b.beta],
            _ => Vec::new(),
        }
    }
}
