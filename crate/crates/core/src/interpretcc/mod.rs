mod gate;
mod gating;
mod groups;
mod moe;
mod routing;

pub use gate::{hard_mask, select_active, sparsity_penalty, GateConfig, MaskMode, MaskSample, SelectionMode, GATE_THRESHOLD};
pub use gating::{FeatureGatingConfig, FeatureGatingModel};
pub use groups::{FeatureGroup, FeatureGroupSpec};
pub use moe::{InterpretCCConfig, InterpretCCModel};
pub use routing::{Interpretable, Prediction, RoutingDecision, RoutingMode, INTERPRETCC_METHOD};
