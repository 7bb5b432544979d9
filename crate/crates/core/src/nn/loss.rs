use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::layer::Param;
use crate::linalg::{dot, Matrix};
use crate::{math, Error, Result};

/// Numerically stable softmax of one row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|v| math::exp(v - max)).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// Mean (or weighted mean) cross-entropy over rows, and its gradient with
/// respect to the logits.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize], weights: Option<&[f64]>) -> Result<(f64, Matrix)> {
    if labels.len() != logits.rows() {
        return Err(Error::LengthMismatch { left: labels.len(), right: logits.rows() });
    }
    let classes = logits.cols();
    let total_w: f64 = match weights {
        Some(w) => w.iter().sum(),
        None => logits.rows() as f64,
    };
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(logits.rows(), classes);
    for (r, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::LabelOutOfRange { label: y, classes });
        }
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| math::exp(v - max)).sum();
        let lse = max + math::ln(sum);
        let w = weights.map_or(1.0, |w| w[r]) / total_w;
        loss += w * (lse - row[y]);
        let g = grad.row_mut(r);
        for c in 0..classes {
            g[c] = w * math::exp(row[c] - lse);
        }
        g[y] -= w;
    }
    Ok((loss, grad))
}

/// Classification head with an additive angular margin: the true-class
/// logit is `s·cos(θ_y + m)`, every other logit `s·cos θ_c`, where `θ` is
/// the angle between the normalized embedding and normalized class weight.
#[derive(Clone, Debug)]
pub struct ArcFaceHead {
    /// `classes × dim`
    pub weight: Param,
    pub scale: f64,
    pub margin: f64,
}

const COS_CLAMP: f64 = 1.0 - 1e-12;

fn normalize_rows(m: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for r in 0..m.rows() {
        let n = math::sqrt(dot(m.row(r), m.row(r)));
        if n == 0.0 {
            return Err(Error::ZeroRow { row: r });
        }
        out.row_mut(r).iter_mut().for_each(|v| *v /= n);
        norms.push(n);
    }
    Ok((out, norms))
}

/// Pulls a gradient with respect to a normalized row back through the
/// normalization: `(g − x̂(x̂·g)) / ‖x‖`.
fn unnormalize_grad(unit: &Matrix, norms: &[f64], g: &Matrix) -> Matrix {
    let mut out = g.clone();
    for (r, &norm) in norms.iter().enumerate().take(g.rows()) {
        let u = unit.row(r);
        let proj = dot(u, g.row(r));
        for (o, uv) in out.row_mut(r).iter_mut().zip(u) {
            *o = (*o - uv * proj) / norm;
        }
    }
    out
}

impl ArcFaceHead {
    pub fn new<R: Rng + ?Sized>(classes: usize, dim: usize, scale: f64, margin: f64, rng: &mut R) -> Self {
        let bound = math::sqrt(6.0 / dim.max(1) as f64);
        let w = Matrix::from_fn(classes, dim, |_, _| rng.random_range(-bound..bound));
        Self { weight: Param::new(w), scale, margin }
    }

    pub fn classes(&self) -> usize {
        self.weight.value.rows()
    }

    /// Cosine between each embedding and each class weight (`batch × classes`).
    pub fn cosines(&self, emb: &Matrix) -> Result<Matrix> {
        let (x, _) = normalize_rows(emb)?;
        let (w, _) = normalize_rows(&self.weight.value)?;
        Ok(x.matmul_t(&w))
    }

    /// Nearest class by cosine.
    pub fn predict(&self, emb: &Matrix) -> Result<Vec<usize>> {
        let cos = self.cosines(emb)?;
        Ok((0..cos.rows())
            .map(|r| {
                let row = cos.row(r);
                (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a))).unwrap_or(0)
            })
            .collect())
    }

    /// Mean loss over the batch. Stores the class-weight gradient and returns
    /// the gradient with respect to `emb`.
    pub fn loss(&mut self, emb: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
        let classes = self.classes();
        if emb.cols() != self.weight.value.cols() {
            return Err(Error::DimMismatch { expected: self.weight.value.cols(), actual: emb.cols() });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let (x, xn) = normalize_rows(emb)?;
        let (w, wn) = normalize_rows(&self.weight.value)?;
        let cos = x.matmul_t(&w);
        let (cm, sm) = (math::cos(self.margin), math::sin(self.margin));
        let mut logits = cos.clone();
        let mut dphi = vec![0.0; labels.len()];
        for (r, &y) in labels.iter().enumerate() {
            let c = cos.get(r, y).clamp(-COS_CLAMP, COS_CLAMP);
            let sin_t = math::sqrt(1.0 - c * c);
            // cos(θ + m) = cosθ·cos m − sinθ·sin m
            logits.set(r, y, c * cm - sin_t * sm);
            dphi[r] = cm + sm * c / sin_t;
        }
        logits.as_mut_slice().iter_mut().for_each(|v| *v *= self.scale);
        let (loss, dlogits) = softmax_cross_entropy(&logits, labels, None)?;
        let mut dcos = dlogits;
        dcos.as_mut_slice().iter_mut().for_each(|v| *v *= self.scale);
        for (r, &y) in labels.iter().enumerate() {
            let v = dcos.get(r, y) * dphi[r];
            dcos.set(r, y, v);
        }
        let dx_unit = dcos.matmul(&w);
        let dw_unit = dcos.t_matmul(&x);
        self.weight.grad = unnormalize_grad(&w, &wn, &dw_unit);
        Ok((loss, unnormalize_grad(&x, &xn, &dx_unit)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_logits_give_ln2() {
        let (loss, grad) = softmax_cross_entropy(&Matrix::zeros(1, 2), &[1], None).unwrap();
        assert!((loss - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((softmax(&[0.0, 0.0])[1] - 0.5).abs() < 1e-15);
        assert_eq!(grad.as_slice(), &[0.5, -0.5]);
    }

    #[test]
    fn extreme_logits_are_stable() {
        let l = Matrix::new(1, 2, vec![-1000.0, 1000.0]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&l, &[1], None).unwrap();
        assert!(loss.is_finite() && loss.abs() < 1e-12);
        assert!(grad.is_finite());
        let p = softmax(&[-1000.0, 1000.0]);
        assert_eq!(p[1], 1.0);
    }

    #[test]
    fn label_out_of_range() {
        assert!(softmax_cross_entropy(&Matrix::zeros(1, 2), &[2], None).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut head = ArcFaceHead::new(3, 4, 40.0, 0.25, &mut rng);
        let emb = Matrix::from_fn(1, 4, |_, c| c as f64 + 1.0);
        assert!(matches!(head.loss(&emb, &[3]), Err(Error::LabelOutOfRange { label: 3, classes: 3 })));
    }

    #[test]
    fn single_class_has_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for m in [0.0, 0.25, 0.5] {
            let mut head = ArcFaceHead::new(1, 4, 40.0, m, &mut rng);
            let emb = Matrix::from_fn(3, 4, |r, c| (r + c) as f64 - 1.5);
            let (loss, _) = head.loss(&emb, &[0, 0, 0]).unwrap();
            assert_eq!(loss, 0.0);
        }
    }

    #[test]
    fn zero_margin_unit_scale_is_normalized_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut head = ArcFaceHead::new(5, 6, 1.0, 0.0, &mut rng);
        let emb = Matrix::from_fn(4, 6, |r, c| libm::sin((r * 6 + c) as f64));
        let labels = [0, 3, 4, 1];
        let (loss, _) = head.loss(&emb, &labels).unwrap();
        let cos = head.cosines(&emb).unwrap();
        let (want, _) = softmax_cross_entropy(&cos, &labels, None).unwrap();
        assert!((loss - want).abs() < 1e-6);
    }
}
