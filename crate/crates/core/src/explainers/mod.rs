//! Post-hoc explainers for arbitrary black-box predict functions, and the
//! [`Explanation`] record shared with interpretable models and metrics.

mod lime;
mod permutation;
mod shapley;
mod spec;

use std::hash::Hasher;

use rustc_hash::FxHasher;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{argmax, Classifier};

pub use lime::{lime_local, LimeConfig};
pub use permutation::{permutation_importance, ImportanceMetric, DEFAULT_REPEATS};
pub use shapley::{shapley_exact, shapley_sampled, MAX_EXACT_FEATURES};
pub use spec::{ExplainTarget, ExplainerSpec, METHOD_TAGS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub name: String,
    pub score: f64,
}

/// Per-feature attribution for one instance (or globally, when
/// `instance_id` is `None`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub method: String,
    #[serde(rename = "feature_attributions")]
    pub attributions: Vec<f64>,
    /// Class whose probability is being explained; `None` for global explanations.
    pub target_class: Option<usize>,
    /// Groups the model activated; empty for post-hoc methods.
    pub active_groups: Vec<GroupScore>,
    pub latency_ms: f64,
    pub seed: Option<u64>,
    pub checkpoint_id: Option<String>,
    pub instance_id: Option<String>,
}

/// Fx hash of a feature vector's bits, used to check that explanations
/// refer to the same instance.
pub fn instance_id(x: &[f64]) -> String {
    let mut h = FxHasher::default();
    for v in x {
        h.write_u64(v.to_bits());
    }
    const HEX: &[u8; 16] = b"0123456789abcdef";
    let v = h.finish();
    let digits: Vec<u8> = (0..16).rev().map(|i| HEX[((v >> (4 * i)) & 0xf) as usize]).collect();
    String::from_utf8(digits).expect("ascii")
}

impl Explanation {
    pub fn new(method: &str, attributions: Vec<f64>, target_class: usize, x: &[f64]) -> Self {
        Self {
            method: method.to_string(),
            attributions,
            target_class: Some(target_class),
            active_groups: Vec::new(),
            latency_ms: 0.0,
            seed: None,
            checkpoint_id: None,
            instance_id: Some(instance_id(x)),
        }
    }

    pub fn global(method: &str, attributions: Vec<f64>) -> Self {
        Self {
            method: method.to_string(),
            attributions,
            target_class: None,
            active_groups: Vec::new(),
            latency_ms: 0.0,
            seed: None,
            checkpoint_id: None,
            instance_id: None,
        }
    }

    pub fn num_features(&self) -> usize {
        self.attributions.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("explanation serializes")
    }

    /// JSON of everything except the wall-clock latency: the part of the
    /// record that must be identical across repeated runs.
    pub fn canonical_json(&self) -> String {
        let mut copy = self.clone();
        copy.latency_ms = 0.0;
        copy.to_json()
    }
}

/// An opaque predict function from a feature vector to class probabilities.
///
/// Implementations must be safe for concurrent read-only calls.
pub trait BlackBox: Send + Sync {
    fn num_features(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn predict(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl<T: Classifier + ?Sized> BlackBox for T {
    fn num_features(&self) -> usize {
        Classifier::num_features(self)
    }

    fn num_classes(&self) -> usize {
        Classifier::num_classes(self)
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.predict_proba(x)
    }
}

/// Wraps a closure as a [`BlackBox`].
pub struct FnBlackBox<F> {
    f: F,
    num_features: usize,
    num_classes: usize,
}

impl<F> FnBlackBox<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    pub fn new(num_features: usize, num_classes: usize, f: F) -> Self {
        Self {
            f,
            num_features,
            num_classes,
        }
    }
}

impl<F> BlackBox for FnBlackBox<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn num_features(&self) -> usize {
        self.num_features
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.num_features {
            return Err(Error::Dimension {
                op: "predict",
                left: vec![self.num_features],
                right: vec![x.len()],
            });
        }
        Ok((self.f)(x))
    }
}

/// Adapts an interpretable model to the [`BlackBox`] interface.
pub struct InterpretableBlackBox<'a>(pub &'a dyn crate::interpretcc::Interpretable);

impl BlackBox for InterpretableBlackBox<'_> {
    fn num_features(&self) -> usize {
        self.0.num_features()
    }

    fn num_classes(&self) -> usize {
        self.0.num_classes()
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.0.predict_proba(x)
    }
}

/// Checks the output contract: probabilities summing to 1 within 1e-6.
pub fn check_probabilities(p: &[f64]) -> Result<()> {
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-6 || p.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract(format!("black box output sums to {total}, not 1")));
    }
    Ok(())
}

/// Probability of `class` at `x`.
pub fn class_probability(f: &dyn BlackBox, x: &[f64], class: usize) -> Result<f64> {
    let p = f.predict(x)?;
    p.get(class)
        .copied()
        .ok_or_else(|| Error::Index(format!("class {class} out of range for {} outputs", p.len())))
}

/// The model's argmax class at `x`.
pub fn target_class(f: &dyn BlackBox, x: &[f64]) -> Result<usize> {
    Ok(argmax(&f.predict(x)?))
}

pub(crate) fn check_instance(f: &dyn BlackBox, x: &[f64], baseline: Option<&[f64]>) -> Result<()> {
    let d = f.num_features();
    if x.len() != d || baseline.is_some_and(|b| b.len() != d) {
        return Err(Error::Dimension {
            op: "explain",
            left: vec![d],
            right: vec![x.len(), baseline.map_or(d, <[f64]>::len)],
        });
    }
    Ok(())
}

/// A configured explainer callable per instance and seed.
pub trait Explainer: Send + Sync {
    fn method(&self) -> &str;
    fn explain(&self, x: &[f64], seed: u64) -> Result<Explanation>;
}

pub struct ShapleyExactExplainer<'a> {
    pub model: &'a dyn BlackBox,
    pub baseline: Vec<f64>,
}

impl Explainer for ShapleyExactExplainer<'_> {
    fn method(&self) -> &str {
        "shapley_exact"
    }

    fn explain(&self, x: &[f64], _seed: u64) -> Result<Explanation> {
        shapley_exact(self.model, x, &self.baseline, None)
    }
}

pub struct ShapleySampledExplainer<'a> {
    pub model: &'a dyn BlackBox,
    pub baseline: Vec<f64>,
    pub n_permutations: usize,
}

impl Explainer for ShapleySampledExplainer<'_> {
    fn method(&self) -> &str {
        "shapley_sampled"
    }

    fn explain(&self, x: &[f64], seed: u64) -> Result<Explanation> {
        let mut rng = crate::Rng::new(seed);
        shapley_sampled(self.model, x, &self.baseline, self.n_permutations, &mut rng, None)
    }
}

pub struct LimeExplainer<'a> {
    pub model: &'a dyn BlackBox,
    pub config: LimeConfig,
}

impl Explainer for LimeExplainer<'_> {
    fn method(&self) -> &str {
        "lime"
    }

    fn explain(&self, x: &[f64], seed: u64) -> Result<Explanation> {
        let mut rng = crate::Rng::new(seed);
        lime_local(self.model, x, &self.config, &mut rng, None)
    }
}

/// Global permutation importance, returned unchanged for every instance.
pub struct PermutationExplainer<'a> {
    pub model: &'a dyn BlackBox,
    pub data: &'a crate::data::Dataset,
    pub metric: ImportanceMetric,
    pub repeats: usize,
}

impl Explainer for PermutationExplainer<'_> {
    fn method(&self) -> &str {
        "permutation"
    }

    fn explain(&self, _x: &[f64], seed: u64) -> Result<Explanation> {
        let mut rng = crate::Rng::new(seed);
        permutation_importance(self.model, self.data, self.metric, self.repeats, &mut rng)
    }
}

/// The model's own routing explanation; ignores the seed.
pub struct InterpretableExplainer<'a> {
    pub model: &'a dyn crate::interpretcc::Interpretable,
}

impl Explainer for InterpretableExplainer<'_> {
    fn method(&self) -> &str {
        crate::interpretcc::INTERPRETCC_METHOD
    }

    fn explain(&self, x: &[f64], _seed: u64) -> Result<Explanation> {
        self.model.explain(x)
    }
}
