use alloc::format;
use alloc::vec::Vec;

use super::layer::Param;
use crate::linalg::Matrix;
use crate::{Error, Result};

/// SGD with classical momentum and coupled weight decay:
/// `v ← μv + g + λθ`, `θ ← θ − η·v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Matrix>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self { lr, momentum, weight_decay, velocity: Vec::new() }
    }

    /// Applies one update. `params` must be passed in the same order on
    /// every call. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        for (idx, p) in params.iter().enumerate() {
            if !p.grad.is_finite() {
                return Err(Error::NonFiniteGradient { name: format!("#{idx}") });
            }
        }
        if self.velocity.len() != params.len() {
            self.velocity = params.iter().map(|p| Matrix::zeros(p.value.rows(), p.value.cols())).collect();
        }
        for (p, v) in params.iter_mut().zip(self.velocity.iter_mut()) {
            let vs = v.as_mut_slice();
            let gs = p.grad.as_slice();
            let ws = p.value.as_mut_slice();
            for k in 0..vs.len() {
                vs[k] = self.momentum * vs[k] + gs[k] + self.weight_decay * ws[k];
                ws[k] -= self.lr * vs[k];
            }
        }
        Ok(())
    }
}

/// Step schedule that restarts every `cycle` epochs: within a cycle the rate
/// is multiplied by `gamma` once each milestone is reached.
#[derive(Clone, Debug, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub cycle: usize,
    pub milestones: Vec<usize>,
    pub gamma: f64,
}

impl LrSchedule {
    /// Five-epoch cycle, ×0.1 from the fourth epoch of each cycle.
    pub fn linker(base: f64) -> Self {
        Self { base, cycle: 5, milestones: alloc::vec![3], gamma: 0.1 }
    }

    /// Ten-epoch cycle, ×0.1 after the 2nd, 5th and 8th epoch.
    pub fn gcn(base: f64) -> Self {
        Self { base, cycle: 10, milestones: alloc::vec![2, 5, 8], gamma: 0.1 }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let pos = if self.cycle == 0 { epoch } else { epoch % self.cycle };
        let drops = self.milestones.iter().filter(|&&m| pos >= m).count();
        let mut lr = self.base;
        for _ in 0..drops {
            lr *= self.gamma;
        }
        lr
    }
}
