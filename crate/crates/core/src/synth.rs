//! Gaussian blobs on the unit hypersphere.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::graph::{normalize_rows, EmbeddingSet, LabelVector};
use crate::linalg::Matrix;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassSizes {
    Fixed(usize),
    /// Inclusive range.
    Uniform {
        min: usize,
        max: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub sizes: ClassSizes,
    pub dim: usize,
    pub noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::param("dim", "must be at least 2"));
        }
        if self.classes == 0 {
            return Err(Error::param("classes", "must be positive"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::param("noise", "must be finite and non-negative"));
        }
        match self.sizes {
            ClassSizes::Fixed(0) => Err(Error::param("sizes", "class size must be positive")),
            ClassSizes::Uniform { min, max } if min == 0 || min > max => {
                Err(Error::param("sizes", "need 1 <= min <= max"))
            }
            _ => Ok(()),
        }
    }
}

fn unit_gaussian<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if v.iter().any(|&x| x != 0.0) {
            let n = crate::linalg::norm(&v);
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Draws class centers uniformly on the sphere and samples
/// `normalize(center + noise * N(0, I))` per member. Nodes are shuffled so
/// that classes are not contiguous.
pub fn synth_generate(spec: &SynthSpec) -> Result<(EmbeddingSet, LabelVector)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers: Vec<Vec<f64>> = (0..spec.classes).map(|_| unit_gaussian(&mut rng, spec.dim)).collect();
    let mut labels = Vec::new();
    for c in 0..spec.classes {
        let size = match spec.sizes {
            ClassSizes::Fixed(s) => s,
            ClassSizes::Uniform { min, max } => rng.random_range(min..=max),
        };
        labels.extend(core::iter::repeat_n(c, size));
    }
    labels.shuffle(&mut rng);
    let mut data = Vec::with_capacity(labels.len() * spec.dim);
    for &c in &labels {
        for &x in &centers[c] {
            let eps: f64 = rng.sample(StandardNormal);
            data.push(x + spec.noise * eps);
        }
    }
    let m = Matrix::new(labels.len(), spec.dim, data)?;
    Ok((normalize_rows(m)?, LabelVector::new(labels)))
}
