use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layer::Mode;
use super::mlp::Mlp;
use crate::linalg::{dot, Matrix};
use crate::Result;

/// Outcome of comparing analytic and numeric gradients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradReport {
    /// `max |a − n| / max(|a|, |n|, floor)` over all checked coordinates.
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

impl GradReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }

    pub fn merge(self, other: GradReport) -> GradReport {
        if other.max_rel_error > self.max_rel_error {
            GradReport { checked: self.checked + other.checked, ..other }
        } else {
            GradReport { checked: self.checked + other.checked, ..self }
        }
    }
}

/// Gradients smaller than this are compared in absolute terms.
const REL_FLOOR: f64 = 1e-6;

pub fn compare_gradients(analytic: &[f64], numeric: &[f64]) -> GradReport {
    let mut report = GradReport { max_rel_error: 0.0, worst_index: 0, checked: analytic.len().min(numeric.len()) };
    for (k, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let denom = a.abs().max(n.abs()).max(REL_FLOOR);
        let err = (a - n).abs() / denom;
        if err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
            report.worst_index = k;
        }
    }
    report
}

/// Central differences `(f(x + h·e_k) − f(x − h·e_k)) / 2h`.
pub fn numeric_gradient(point: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = point.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let orig = x[k];
        x[k] = orig + h;
        let up = f(&x);
        x[k] = orig - h;
        let down = f(&x);
        x[k] = orig;
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// Checks a stack's parameter and input gradients against central
/// differences of the scalar `Σ output ⊙ R` for a fixed random `R`.
///
/// Dropout masks are regenerated from the same seed on every evaluation.
pub fn check_mlp(mlp: &Mlp, input: &Matrix, mode: Mode, seed: u64, h: f64) -> Result<GradReport> {
    let mut net = mlp.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = net.forward(input, mode, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed))?;
    let proj = Matrix::from_fn(out.rows(), out.cols(), |_, _| rng.random_range(-1.0..1.0));
    let dx = net.backward(&proj)?;
    let analytic_params = net.flat_grads();
    let base = mlp.flat_params();

    let eval = |params: &[f64], x: &Matrix| -> f64 {
        let mut probe = mlp.clone();
        probe.set_flat_params(params);
        let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let y = probe.forward(x, mode, &mut r).expect("shapes checked above");
        dot(y.as_slice(), proj.as_slice())
    };
    let numeric_params = numeric_gradient(&base, h, |p| eval(p, input));
    let numeric_input = numeric_gradient(input.as_slice(), h, |xs| {
        let x = Matrix::new(input.rows(), input.cols(), xs.to_vec()).expect("shape");
        eval(&base, &x)
    });
    Ok(compare_gradients(&analytic_params, &numeric_params).merge(compare_gradients(dx.as_slice(), &numeric_input)))
}
