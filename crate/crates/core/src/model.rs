//! Classifier abstraction shared by the trainer, the explainers and the
//! checkpoint store.

use serde::{Deserialize, Serialize};

use crate::diffcore::{Mlp, MlpSpec, Rng, Var};
use crate::error::{Error, Result};
use crate::interpretcc::{FeatureGatingModel, GateConfig, InterpretCCModel};
use crate::{ParamStore, Tape};

/// How gates behave during a tape forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateForward {
    /// Gumbel-sigmoid sample, hard on the forward path, relaxed gradient.
    StraightThrough,
    /// Gumbel-sigmoid sample used as is (smooth; for gradient checking).
    Relaxed,
    /// Deterministic inference decisions held constant.
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardCtx {
    pub gate: GateForward,
    pub temperature: f64,
    /// Sparsity coefficient applied to the gate scores.
    pub sparsity: f64,
}

impl ForwardCtx {
    pub fn inference() -> Self {
        Self {
            gate: GateForward::Hard,
            temperature: 1.0,
            sparsity: 0.0,
        }
    }
}

/// Result of a batched forward pass.
#[derive(Debug, Clone)]
pub struct BatchForward {
    /// `[batch, classes]` logits.
    pub logits: Var,
    /// Scalar regularization term, already scaled by its coefficient.
    pub penalty: Option<Var>,
    /// Number of active gates per row, for gated models.
    pub active_per_row: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    MlpBlackbox,
    FeatureGating,
    InterpretccMoe,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp_blackbox" => Ok(Self::MlpBlackbox),
            "feature_gating" => Ok(Self::FeatureGating),
            "interpretcc_moe" => Ok(Self::InterpretccMoe),
            other => Err(Error::Config(format!(
                "unknown model kind {other:?}; expected mlp_blackbox, feature_gating or interpretcc_moe"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::MlpBlackbox => "mlp_blackbox",
            Self::FeatureGating => "feature_gating",
            Self::InterpretccMoe => "interpretcc_moe",
        })
    }
}

/// A trainable classifier over dense feature vectors.
///
/// Implementations must be safe for concurrent read-only prediction.
pub trait Classifier: Send + Sync {
    fn num_features(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;

    /// Tape forward for a `[batch, features]` input.
    fn forward_batch(&self, tape: &mut Tape, x: Var, ctx: &ForwardCtx, rng: &mut Rng) -> Result<BatchForward>;

    /// Class probabilities for one row (inference mode).
    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }

    /// Gate schedule and sparsity for gated models.
    fn gate_config(&self) -> Option<&GateConfig> {
        None
    }
}

pub(crate) fn check_len(x: &[f64], expected: usize) -> Result<()> {
    if x.len() != expected {
        return Err(Error::Dimension {
            op: "predict",
            left: vec![expected],
            right: vec![x.len()],
        });
    }
    Ok(())
}

/// Index of the first maximum.
pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// Softmax computed in place.
pub(crate) fn softmax_row(mut logits: Vec<f64>) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    logits.iter_mut().for_each(|l| *l = (*l - max).exp());
    let total: f64 = logits.iter().sum();
    logits.iter_mut().for_each(|e| *e /= total);
    logits
}

/// Plain ReLU MLP classifier, the black box that post-hoc explainers target.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    store: ParamStore,
    mlp: Mlp,
}

impl MlpClassifier {
    pub fn new(num_features: usize, hidden: &[usize], num_classes: usize, rng: &mut Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "mlp", MlpSpec::new(num_features, hidden, num_classes), rng)?;
        Ok(Self { store, mlp })
    }

    pub(crate) fn from_store(store: ParamStore, spec: MlpSpec) -> Result<Self> {
        let mlp = Mlp::bind(&store, "mlp", spec)?;
        Ok(Self { store, mlp })
    }

    pub fn spec(&self) -> &MlpSpec {
        self.mlp.spec()
    }

    /// Raw logits for one row.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.mlp.forward_row(&self.store, x)
    }
}

impl Classifier for MlpClassifier {
    fn num_features(&self) -> usize {
        self.mlp.spec().input
    }

    fn num_classes(&self) -> usize {
        self.mlp.spec().output
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward_batch(&self, tape: &mut Tape, x: Var, _ctx: &ForwardCtx, _rng: &mut Rng) -> Result<BatchForward> {
        Ok(BatchForward {
            logits: self.mlp.forward(tape, &self.store, x)?,
            penalty: None,
            active_per_row: None,
        })
    }

    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(x, self.num_features())?;
        Ok(softmax_row(self.logits(x)))
    }
}

/// Any of the three model families, for storage and the CLI.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Mlp(MlpClassifier),
    FeatureGating(FeatureGatingModel),
    InterpretCC(InterpretCCModel),
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Mlp(_) => ModelKind::MlpBlackbox,
            AnyModel::FeatureGating(_) => ModelKind::FeatureGating,
            AnyModel::InterpretCC(_) => ModelKind::InterpretccMoe,
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            AnyModel::Mlp(m) => m,
            AnyModel::FeatureGating(m) => m,
            AnyModel::InterpretCC(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Classifier {
        match self {
            AnyModel::Mlp(m) => m,
            AnyModel::FeatureGating(m) => m,
            AnyModel::InterpretCC(m) => m,
        }
    }

    /// The model as an interpretable-by-design explainer, if it is one.
    pub fn as_interpretable(&self) -> Option<&dyn crate::interpretcc::Interpretable> {
        match self {
            AnyModel::Mlp(_) => None,
            AnyModel::FeatureGating(m) => Some(m),
            AnyModel::InterpretCC(m) => Some(m),
        }
    }
}

impl Classifier for AnyModel {
    fn num_features(&self) -> usize {
        self.inner().num_features()
    }

    fn num_classes(&self) -> usize {
        self.inner().num_classes()
    }

    fn store(&self) -> &ParamStore {
        self.inner().store()
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        self.inner_mut().store_mut()
    }

    fn forward_batch(&self, tape: &mut Tape, x: Var, ctx: &ForwardCtx, rng: &mut Rng) -> Result<BatchForward> {
        self.inner().forward_batch(tape, x, ctx, rng)
    }

    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.inner().predict_proba(x)
    }

    fn gate_config(&self) -> Option<&GateConfig> {
        self.inner().gate_config()
    }
}
