use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::layer::{Layer, LayerSpec, Mode, Param};
use crate::linalg::Matrix;
use crate::{Error, Result};

/// An ordered stack of layers.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Layer>,
}

fn spec_code(spec: LayerSpec) -> [f64; 3] {
    match spec {
        LayerSpec::Linear { input, output } => [0.0, input as f64, output as f64],
        LayerSpec::BatchNorm { width } => [1.0, width as f64, 0.0],
        LayerSpec::LeakyRelu { slope } => [2.0, slope, 0.0],
        LayerSpec::Selu => [3.0, 0.0, 0.0],
        LayerSpec::Dropout { p } => [4.0, p, 0.0],
    }
}

fn spec_from_code(code: &[f64]) -> Result<LayerSpec> {
    let bad = || Error::param("layer spec", "unknown layer code");
    let kind = *code.first().ok_or_else(bad)?;
    let (a, b) = (code[1], code[2]);
    Ok(match kind as u32 {
        0 => LayerSpec::Linear { input: a as usize, output: b as usize },
        1 => LayerSpec::BatchNorm { width: a as usize },
        2 => LayerSpec::LeakyRelu { slope: a },
        3 => LayerSpec::Selu,
        4 => LayerSpec::Dropout { p: a },
        _ => return Err(bad()),
    })
}

impl Mlp {
    /// Builds a stack, checking that widths chain.
    pub fn new<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        validate(specs)?;
        Ok(Self { layers: specs.iter().map(|&s| Layer::from_spec(s, rng)).collect() })
    }

    /// `LBR` blocks (linear → batch norm → leaky ReLU), each followed by
    /// dropout when `dropout > 0`.
    pub fn lbr_stack<R: Rng + ?Sized>(
        input: usize,
        widths: &[usize],
        slope: f64,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut specs = Vec::new();
        let mut prev = input;
        for &w in widths {
            specs.push(LayerSpec::Linear { input: prev, output: w });
            specs.push(LayerSpec::BatchNorm { width: w });
            specs.push(LayerSpec::LeakyRelu { slope });
            if dropout > 0.0 {
                specs.push(LayerSpec::Dropout { p: dropout });
            }
            prev = w;
        }
        Self::new(&specs, rng)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn input_width(&self) -> Option<usize> {
        self.specs().into_iter().find_map(|s| match s {
            LayerSpec::Linear { input, .. } => Some(input),
            LayerSpec::BatchNorm { width } => Some(width),
            _ => None,
        })
    }

    pub fn output_width(&self) -> Option<usize> {
        self.specs().into_iter().rev().find_map(|s| match s {
            LayerSpec::Linear { output, .. } => Some(output),
            LayerSpec::BatchNorm { width } => Some(width),
            _ => None,
        })
    }

    pub fn forward<R: Rng + ?Sized>(&mut self, x: &Matrix, mode: Mode, rng: &mut R) -> Result<Matrix> {
        if let Some(w) = self.input_width() {
            if x.cols() != w {
                return Err(Error::DimMismatch { expected: w, actual: x.cols() });
            }
        }
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h, mode, rng);
        }
        Ok(h)
    }

    /// Back-propagates `upstream`, storing parameter gradients and returning
    /// the gradient with respect to the input.
    pub fn backward(&mut self, upstream: &Matrix) -> Result<Matrix> {
        let mut g = upstream.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.as_slice().len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.value.as_slice().iter().copied()).collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.grad.as_slice().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut at = 0;
        for p in self.params_mut() {
            let n = p.value.as_slice().len();
            p.value.as_mut_slice().copy_from_slice(&flat[at..at + n]);
            at += n;
        }
    }

    /// Architecture, parameters and batch-norm buffers as named tensors.
    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, Matrix)> {
        let specs = self.specs();
        let codes: Vec<f64> = specs.iter().flat_map(|&s| spec_code(s)).collect();
        let mut out = Vec::new();
        out.push((format!("{prefix}.spec"), Matrix::new(specs.len(), 3, codes).expect("shape")));
        for (i, l) in self.layers.iter().enumerate() {
            match l {
                Layer::Linear(lin) => {
                    out.push((format!("{prefix}.{i}.weight"), lin.weight.value.clone()));
                    out.push((format!("{prefix}.{i}.bias"), lin.bias.value.clone()));
                }
                Layer::BatchNorm(bn) => {
                    let w = bn.running_mean.len();
                    out.push((format!("{prefix}.{i}.gamma"), bn.gamma.value.clone()));
                    out.push((format!("{prefix}.{i}.beta"), bn.beta.value.clone()));
                    out.push((
                        format!("{prefix}.{i}.running_mean"),
                        Matrix::new(1, w, bn.running_mean.clone()).expect("shape"),
                    ));
                    out.push((
                        format!("{prefix}.{i}.running_var"),
                        Matrix::new(1, w, bn.running_var.clone()).expect("shape"),
                    ));
                }
                _ => {}
            }
        }
        out
    }

    /// Inverse of [`Mlp::named_tensors`].
    pub fn from_named_tensors(prefix: &str, tensors: &[(String, Matrix)]) -> Result<Self> {
        let find = |name: String| -> Result<&Matrix> {
            tensors
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, m)| m)
                .ok_or(Error::ConfigMismatch(format!("missing tensor {name}")))
        };
        let spec_m = find(format!("{prefix}.spec"))?;
        if spec_m.cols() != 3 {
            return Err(Error::ConfigMismatch(format!("{prefix}.spec must have 3 columns")));
        }
        let specs = (0..spec_m.rows()).map(|r| spec_from_code(spec_m.row(r))).collect::<Result<Vec<_>>>()?;
        validate(&specs)?;
        let mut layers = Vec::with_capacity(specs.len());
        for (i, s) in specs.into_iter().enumerate() {
            let shaped = |name: &str, rows: usize, cols: usize| -> Result<Matrix> {
                let m = find(format!("{prefix}.{i}.{name}"))?;
                if (m.rows(), m.cols()) != (rows, cols) {
                    return Err(Error::ConfigMismatch(format!("{prefix}.{i}.{name} has wrong shape")));
                }
                Ok(m.clone())
            };
            layers.push(match s {
                LayerSpec::Linear { input, output } => Layer::Linear(super::layer::Linear::from_params(
                    shaped("weight", input, output)?,
                    shaped("bias", 1, output)?,
                )),
                LayerSpec::BatchNorm { width } => {
                    let mut bn = super::layer::BatchNorm::new(width);
                    bn.gamma = Param::new(shaped("gamma", 1, width)?);
                    bn.beta = Param::new(shaped("beta", 1, width)?);
                    bn.running_mean = shaped("running_mean", 1, width)?.into_vec();
                    bn.running_var = shaped("running_var", 1, width)?.into_vec();
                    Layer::BatchNorm(bn)
                }
                LayerSpec::LeakyRelu { slope } => Layer::LeakyRelu(super::layer::LeakyRelu::new(slope)),
                LayerSpec::Selu => Layer::Selu(super::layer::Selu::default()),
                LayerSpec::Dropout { p } => Layer::Dropout(super::layer::Dropout::new(p)),
            });
        }
        Ok(Self { layers })
    }
}

fn validate(specs: &[LayerSpec]) -> Result<()> {
    let mut width: Option<usize> = None;
    for s in specs {
        let (inp, out) = match *s {
            LayerSpec::Linear { input, output } => (Some(input), Some(output)),
            LayerSpec::BatchNorm { width } => (Some(width), Some(width)),
            LayerSpec::Dropout { p } if !(0.0..1.0).contains(&p) => {
                return Err(Error::param("dropout", "p must lie in [0, 1)"))
            }
            _ => (None, None),
        };
        if let (Some(prev), Some(inp)) = (width, inp) {
            if prev != inp {
                return Err(Error::DimMismatch { expected: prev, actual: inp });
            }
        }
        if out.is_some() {
            width = out;
        }
    }
    Ok(())
}
