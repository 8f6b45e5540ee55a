use serde::{Deserialize, Serialize};

use super::{
    BlackBox, Explainer, ImportanceMetric, InterpretableExplainer, LimeConfig, LimeExplainer, PermutationExplainer,
    ShapleyExactExplainer, ShapleySampledExplainer, DEFAULT_REPEATS,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::interpretcc::Interpretable;

pub const METHOD_TAGS: [&str; 5] = ["interpretcc", "shapley_exact", "shapley_sampled", "lime", "permutation"];

/// An explainer choice plus its hyperparameters, independent of any model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ExplainerSpec {
    Interpretcc,
    ShapleyExact,
    ShapleySampled { n_permutations: usize },
    Lime(LimeConfig),
    Permutation { repeats: usize, metric: ImportanceMetric },
}

impl ExplainerSpec {
    /// Defaults for a method tag; unknown tags list the valid ones.
    pub fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag {
            "interpretcc" => Self::Interpretcc,
            "shapley_exact" => Self::ShapleyExact,
            "shapley_sampled" => Self::ShapleySampled { n_permutations: 100 },
            "lime" => Self::Lime(LimeConfig::default()),
            "permutation" => Self::Permutation {
                repeats: DEFAULT_REPEATS,
                metric: ImportanceMetric::Accuracy,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown method {other:?}; valid methods: {}",
                    METHOD_TAGS.join(", ")
                )))
            }
        })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::Interpretcc => "interpretcc",
            Self::ShapleyExact => "shapley_exact",
            Self::ShapleySampled { .. } => "shapley_sampled",
            Self::Lime(_) => "lime",
            Self::Permutation { .. } => "permutation",
        }
    }

    /// Whether the explanation ignores the instance.
    pub fn is_global(&self) -> bool {
        matches!(self, Self::Permutation { .. })
    }

    /// Whether the output ignores the seed.
    pub fn is_deterministic(&self) -> bool {
        matches!(self, Self::Interpretcc | Self::ShapleyExact)
    }

    pub fn build<'a>(&self, target: ExplainTarget<'a>) -> Result<Box<dyn Explainer + 'a>> {
        let need_baseline = || {
            target
                .baseline
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::Config(format!("{} needs a baseline vector", self.tag())))
        };
        Ok(match self {
            Self::Interpretcc => {
                let model = target.interpretable.ok_or_else(|| {
                    Error::Config("method interpretcc needs an interpretable model (feature_gating or interpretcc_moe)".into())
                })?;
                Box::new(InterpretableExplainer { model })
            }
            Self::ShapleyExact => {
                if target.model.num_features() > super::MAX_EXACT_FEATURES {
                    return Err(Error::Config(format!(
                        "shapley_exact supports at most {} features, this model has {}; use shapley_sampled instead",
                        super::MAX_EXACT_FEATURES,
                        target.model.num_features()
                    )));
                }
                Box::new(ShapleyExactExplainer {
                    model: target.model,
                    baseline: need_baseline()?,
                })
            }
            Self::ShapleySampled { n_permutations } => Box::new(ShapleySampledExplainer {
                model: target.model,
                baseline: need_baseline()?,
                n_permutations: *n_permutations,
            }),
            Self::Lime(config) => Box::new(LimeExplainer {
                model: target.model,
                config: config.clone(),
            }),
            Self::Permutation { repeats, metric } => Box::new(PermutationExplainer {
                model: target.model,
                data: target
                    .data
                    .ok_or_else(|| Error::Config("permutation needs a labeled dataset".into()))?,
                metric: *metric,
                repeats: *repeats,
            }),
        })
    }
}

/// What an explainer is pointed at.
#[derive(Clone, Copy)]
pub struct ExplainTarget<'a> {
    pub model: &'a dyn BlackBox,
    pub interpretable: Option<&'a dyn Interpretable>,
    pub baseline: Option<&'a [f64]>,
    pub data: Option<&'a Dataset>,
}
