//! Interpretable-by-design neural models and the tooling to check their
//! explanations.
//!
//! * [`diffcore`]: tensors, reverse-mode tape, optimizers, seeded RNG.
//! * [`interpretcc`]: feature gating and group-routed mixture-of-experts.
//! * [`explainers`]: exact/sampled Shapley, LIME, permutation importance.
//! * [`metrics`]: prediction gap, rank agreement, Jensen-Shannon, consistency, latency.
//! * [`i2md`]: checkpoints, probe suites, differential diagnostics, timelines.
//! * [`data`]: synthetic generators with planted relevance, CSV I/O, standardization.

pub mod data;
pub mod diffcore;
pub mod interpretcc;
pub mod metrics;
pub mod error;
pub mod explainers;
pub mod i2md;
pub mod model;
pub mod train;

pub use error::{Error, Result};

/// 64-bit instantiations of the generic core, used throughout the crate.
pub type Tensor = diffcore::Tensor<f64>;
pub type Tape = diffcore::Tape<f64>;
pub type ParamStore = diffcore::ParamStore<f64>;
pub type OptimizerState = diffcore::OptimizerState<f64>;

pub use diffcore::Rng;
