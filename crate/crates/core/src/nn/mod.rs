//! A small dense network engine: the fixed layer kinds the linker and GCN
//! need, SGD with momentum, cyclic step schedules, softmax cross-entropy,
//! an additive angular margin head, and finite-difference gradient checks.

mod gradcheck;
mod layer;
mod loss;
mod mlp;
mod optim;

pub use gradcheck::{check_mlp, compare_gradients, numeric_gradient, GradReport};
pub use layer::{BatchNorm, Dropout, Layer, LayerSpec, LeakyRelu, Linear, Mode, Param, Selu, SELU_ALPHA, SELU_LAMBDA};
pub use loss::{softmax, softmax_cross_entropy, ArcFaceHead};
pub use mlp::Mlp;
pub use optim::{LrSchedule, Sgd};

/// Leaky-ReLU slope used by every LBR block.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
