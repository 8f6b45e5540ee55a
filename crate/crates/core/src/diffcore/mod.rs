//! Minimal deterministic differentiable core: dense tensors, a dynamic
//! reverse-mode tape, SGD/Adam, a seeded generator and ReLU MLPs.

mod nn;
mod optim;
mod param;
mod rng;
mod scalar;
mod tape;
mod tensor;

pub use nn::{Linear, Mlp, MlpSpec};
pub use optim::{OptimizerKind, OptimizerState};
pub use param::{ParamId, ParamStore};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tape::{BinaryKind, LossKind, LossTarget, Tape, UnaryKind, Var};
pub use tensor::Tensor;

pub(crate) use tape::sigmoid;
