//! Synthetic data with planted ground truth.
//!
//! * `planted_linear`: `y = 1[w . x_S + noise > 0]` with sparse support `S`
//!   (the features of the first group).
//! * `switch_moe`: feature 0 is a switch. Its value picks one group whose
//!   linear rule produces the label; the other groups are irrelevant for that
//!   row. The switch belongs to every group. When the switch sits exactly at
//!   its mean (0) the logit is 0, so with a zero baseline the irrelevant
//!   groups receive exactly zero Shapley attribution.
//! * `multi_skill`: feature 0 tags the row's sub-task. Skill A rows are
//!   labeled by the sign of feature 1 (kept at least 0.5 from the boundary);
//!   skill B rows by the sign of `x2 * x3`, an interaction an MLP learns later.
//!
//! All features are standard normal unless stated otherwise.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::dataset::Dataset;
use crate::diffcore::{sigmoid, Rng};
use crate::error::{Error, Result};
use crate::interpretcc::FeatureGroupSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    PlantedLinear,
    SwitchMoe,
    MultiSkill,
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "planted_linear" => Ok(Self::PlantedLinear),
            "switch_moe" => Ok(Self::SwitchMoe),
            "multi_skill" => Ok(Self::MultiSkill),
            other => Err(Error::Config(format!(
                "unknown synthetic kind {other:?}; expected planted_linear, switch_moe or multi_skill"
            ))),
        }
    }
}

pub const SKILL_A: &str = "skill_a";
pub const SKILL_B: &str = "skill_b";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub num_features: usize,
    pub num_groups: usize,
    pub n_samples: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind) -> Self {
        let (num_features, num_groups) = match kind {
            SyntheticKind::PlantedLinear => (8, 4),
            SyntheticKind::SwitchMoe => (12, 2),
            SyntheticKind::MultiSkill => (6, 2),
        };
        Self {
            kind,
            num_features,
            num_groups,
            n_samples: 2000,
            noise_std: 0.1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_features == 0 || self.num_groups == 0 || self.n_samples == 0 {
            return Err(Error::Config("synthetic sizes must be positive".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        match self.kind {
            SyntheticKind::PlantedLinear if self.num_groups > self.num_features => Err(Error::Config(
                "planted_linear needs num_groups <= num_features".into(),
            )),
            SyntheticKind::SwitchMoe if self.num_groups < 2 || self.num_groups + 1 > self.num_features => {
                Err(Error::Config(
                    "switch_moe needs at least 2 groups and one feature per group besides the switch".into(),
                ))
            }
            SyntheticKind::MultiSkill if self.num_features < 4 => {
                Err(Error::Config("multi_skill needs at least 4 features".into()))
            }
            _ => Ok(()),
        }
    }

    /// Group layout used by the generator.
    pub fn group_spec(&self) -> Result<FeatureGroupSpec> {
        match self.kind {
            SyntheticKind::SwitchMoe => {
                let rest: Vec<usize> = (1..self.num_features).collect();
                FeatureGroupSpec::contiguous_over(self.num_features, &rest, self.num_groups, &[0])
            }
            _ => FeatureGroupSpec::contiguous(self.num_features, self.num_groups.min(self.num_features)),
        }
    }
}

/// The labeling function of a synthetic dataset, usable as a model oracle.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Linear {
        support: Vec<usize>,
        weights: Vec<f64>,
    },
    Switch {
        /// Descending bucket boundaries on the switch feature.
        thresholds: Vec<f64>,
        /// Non-switch features of each group.
        blocks: Vec<Vec<usize>>,
        weights: Vec<Vec<f64>>,
    },
    MultiSkill,
}

impl Generator {
    /// Noise-free decision value; the label is `1[logit + noise > 0]`.
    pub fn logit(&self, x: &[f64]) -> f64 {
        match self {
            Generator::Linear { support, weights } => support.iter().zip(weights).map(|(&i, w)| w * x[i]).sum(),
            Generator::Switch { blocks, weights, .. } => match self.switch_group(x[0]) {
                Some(g) => blocks[g].iter().zip(&weights[g]).map(|(&i, w)| w * x[i]).sum(),
                None => 0.0,
            },
            Generator::MultiSkill => {
                if x[0] > 0.0 {
                    x[1]
                } else {
                    x[2] * x[3]
                }
            }
        }
    }

    /// Probability of class 1 under a logistic link.
    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Group selected by a switch value; `None` exactly at the switch mean.
    fn switch_group(&self, s: f64) -> Option<usize> {
        let Generator::Switch { thresholds, .. } = self else {
            return Some(0);
        };
        if s == 0.0 {
            return None;
        }
        Some(thresholds.iter().take_while(|&&t| s <= t).count())
    }

    /// Ground-truth relevant group for row `x`.
    pub fn relevant_group(&self, x: &[f64]) -> Option<usize> {
        match self {
            Generator::Linear { .. } => Some(0),
            Generator::Switch { .. } => self.switch_group(x[0]),
            Generator::MultiSkill => None,
        }
    }
}

/// A generated dataset together with its labeling function.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub generator: Generator,
}

fn signed_weight(rng: &mut Rng) -> f64 {
    let magnitude = 0.5 + rng.uniform();
    if rng.uniform() < 0.5 {
        -magnitude
    } else {
        magnitude
    }
}

/// Generates data and generator; a pure function of `spec`.
pub fn generate(spec: &SyntheticSpec) -> Result<Synthetic> {
    spec.validate()?;
    let groups = spec.group_spec()?;
    let mut rng = Rng::new(spec.seed);
    let d = spec.num_features;
    let generator = match spec.kind {
        SyntheticKind::PlantedLinear => {
            let support = groups.group(0).indices.clone();
            let weights = support.iter().map(|_| signed_weight(&mut rng)).collect();
            Generator::Linear { support, weights }
        }
        SyntheticKind::SwitchMoe => {
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            let g = spec.num_groups;
            let thresholds = (1..g).map(|k| normal.inverse_cdf(1.0 - k as f64 / g as f64)).collect();
            let blocks: Vec<Vec<usize>> = groups.groups().iter().map(|grp| grp.indices[1..].to_vec()).collect();
            let weights = blocks
                .iter()
                .map(|b| b.iter().map(|_| signed_weight(&mut rng)).collect())
                .collect();
            Generator::Switch {
                thresholds,
                blocks,
                weights,
            }
        }
        SyntheticKind::MultiSkill => Generator::MultiSkill,
    };

    let mut features = Vec::with_capacity(spec.n_samples * d);
    let mut labels = Vec::with_capacity(spec.n_samples);
    let mut categories = Vec::new();
    let mut relevant = Vec::new();
    for i in 0..spec.n_samples {
        let mut x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        if spec.kind == SyntheticKind::MultiSkill {
            let skill_a = i % 2 == 0;
            x[0] = if skill_a { 1.0 } else { -1.0 };
            if skill_a {
                x[1] = x[1].signum() * (0.5 + x[1].abs());
            }
            categories.push(if skill_a { SKILL_A } else { SKILL_B }.to_string());
        }
        let noisy = generator.logit(&x) + spec.noise_std * rng.normal();
        labels.push(usize::from(noisy > 0.0));
        if let Some(g) = generator.relevant_group(&x) {
            relevant.push(g);
        }
        features.extend(x);
    }

    let mut dataset = Dataset::new(features, d, labels, Dataset::default_names(d))?;
    if spec.kind == SyntheticKind::MultiSkill {
        dataset = dataset.with_categories(categories)?;
    } else {
        dataset.relevant_groups = Some(relevant);
    }
    dataset.groups = Some(groups);
    Ok(Synthetic { dataset, generator })
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    generate(spec).map(|s| s.dataset)
}
