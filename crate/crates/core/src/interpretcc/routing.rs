use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::groups::FeatureGroupSpec;
use crate::error::{Error, Result};
use crate::explainers::{Explanation, GroupScore};
use crate::model::{argmax, Classifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingMode {
    TrainSoft,
    InferenceHard,
}

/// Which groups a model used for one input, and how strongly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub scores: Vec<f64>,
    pub active: Vec<bool>,
    pub mode: RoutingMode,
}

impl RoutingDecision {
    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&g| self.active[g]).collect()
    }

    pub fn num_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Scores of active groups renormalized to sum to 1; zero for inactive ones.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let w = self.weigher();
        (0..self.scores.len()).map(w).collect()
    }

    /// Allocation-free form of [`RoutingDecision::normalized_weights`].
    pub(crate) fn weigher(&self) -> impl Fn(usize) -> f64 + '_ {
        let total: f64 = self.scores.iter().zip(&self.active).filter(|(_, &a)| a).map(|(s, _)| s).sum();
        let n = self.num_active() as f64;
        move |g| match (self.active[g], total > 0.0) {
            (false, _) => 0.0,
            (true, true) => self.scores[g] / total,
            (true, false) => 1.0 / n,
        }
    }

    pub(crate) fn check(&self, num_groups: usize) -> Result<()> {
        if self.active.len() != num_groups || self.scores.len() != num_groups {
            return Err(Error::Dimension {
                op: "predict_with_routing",
                left: vec![num_groups],
                right: vec![self.active.len()],
            });
        }
        if self.num_active() == 0 {
            return Err(Error::Contract("routing decision has no active group".into()));
        }
        Ok(())
    }
}

/// Class probabilities together with the routing that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub decision: RoutingDecision,
    pub latency: Duration,
}

pub const INTERPRETCC_METHOD: &str = "interpretcc";

/// Models whose prediction comes with the exact set of feature groups it used.
pub trait Interpretable: Classifier {
    fn group_spec(&self) -> &FeatureGroupSpec;

    /// Reference values for absent features (training means).
    fn imputation(&self) -> &[f64];

    /// Deterministic inference routing for one standardized row.
    fn route(&self, x: &[f64]) -> Result<RoutingDecision>;

    /// Class probabilities using only the groups active in `decision`.
    fn predict_with_routing(&self, x: &[f64], decision: &RoutingDecision) -> Result<Vec<f64>>;

    /// Routing and prediction in one pass, timed.
    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let start = Instant::now();
        let decision = self.route(x)?;
        let probabilities = self.predict_with_routing(x, &decision)?;
        Ok(Prediction {
            probabilities,
            decision,
            latency: start.elapsed(),
        })
    }

    /// The prediction's own routing as a feature attribution: each active
    /// group's normalized weight is spread evenly over its features.
    fn explain(&self, x: &[f64]) -> Result<Explanation> {
        let prediction = self.predict(x)?;
        Ok(explanation_from_prediction(self.group_spec(), x, &prediction))
    }
}

pub(crate) fn explanation_from_prediction(spec: &FeatureGroupSpec, x: &[f64], p: &Prediction) -> Explanation {
    let weight = p.decision.weigher();
    let mut attributions = vec![0.0; spec.num_features()];
    let mut active_groups = Vec::new();
    for (g, group) in spec.groups().iter().enumerate() {
        if !p.decision.active[g] {
            continue;
        }
        let share = weight(g) / group.indices.len() as f64;
        for &i in &group.indices {
            attributions[i] += share;
        }
        active_groups.push(GroupScore {
            name: group.name.clone(),
            score: p.decision.scores[g],
        });
    }
    let mut e = Explanation::new(INTERPRETCC_METHOD, attributions, argmax(&p.probabilities), x);
    e.active_groups = active_groups;
    e.latency_ms = p.latency.as_secs_f64() * 1e3;
    e
}
