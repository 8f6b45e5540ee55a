use std::collections::{BTreeSet, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::Classifier;

/// Score at or above which a probe's skill counts as acquired.
pub const SKILL_THRESHOLD: f64 = 0.8;
/// Default stability band for [`diff_diagnostics`].
pub const DEFAULT_DELTA: f64 = 0.05;

/// A labeled dataset measuring one capability by accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub name: String,
    pub data: Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSuite {
    probes: Vec<Probe>,
}

impl ProbeSuite {
    pub fn new(probes: Vec<Probe>) -> Result<Self> {
        if probes.is_empty() {
            return Err(Error::Config("a probe suite needs at least one probe".into()));
        }
        let mut seen = HashSet::new();
        for p in &probes {
            if !seen.insert(p.name.as_str()) {
                return Err(Error::Config(format!("duplicate probe name {:?}", p.name)));
            }
            if p.data.is_empty() {
                return Err(Error::Config(format!("probe {:?} has no examples", p.name)));
            }
        }
        Ok(Self { probes })
    }

    /// One probe per category tag, named after the category, sorted by name.
    pub fn from_categories(data: &Dataset) -> Result<Self> {
        let categories = data
            .categories
            .as_ref()
            .ok_or_else(|| Error::Data("dataset has no category tags to build probes from".into()))?;
        let names: BTreeSet<&str> = categories.iter().map(String::as_str).collect();
        let probes = names
            .into_iter()
            .map(|name| {
                Ok(Probe {
                    name: name.to_string(),
                    data: data.filter_category(name)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(probes)
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn names(&self) -> Vec<&str> {
        self.probes.iter().map(|p| p.name.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeScore {
    pub name: String,
    pub score: f64,
    pub n_examples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub checkpoint_id: String,
    pub step: u64,
    pub scores: Vec<ProbeScore>,
    pub wall_clock_ms: f64,
}

impl ProbeReport {
    pub fn score(&self, probe: &str) -> Option<f64> {
        self.scores.iter().find(|s| s.name == probe).map(|s| s.score)
    }

    /// JSON without the wall-clock field: identical for repeated
    /// evaluations of one checkpoint.
    pub fn canonical_json(&self) -> String {
        let mut copy = self.clone();
        copy.wall_clock_ms = 0.0;
        serde_json::to_string(&copy).expect("report serializes")
    }
}

/// Accuracy of `model` on every probe; features must already be in the
/// model's input space.
pub fn evaluate_model(model: &dyn Classifier, checkpoint_id: &str, step: u64, suite: &ProbeSuite) -> Result<ProbeReport> {
    evaluate_with(model, checkpoint_id, step, suite, &|x| x.to_vec())
}

fn evaluate_with(
    model: &dyn Classifier,
    checkpoint_id: &str,
    step: u64,
    suite: &ProbeSuite,
    prepare: &dyn Fn(&[f64]) -> Vec<f64>,
) -> Result<ProbeReport> {
    let start = Instant::now();
    let mut scores = Vec::with_capacity(suite.probes.len());
    for probe in &suite.probes {
        if probe.data.num_features() != model.num_features() {
            return Err(Error::Dimension {
                op: "probe",
                left: vec![model.num_features()],
                right: vec![probe.data.num_features()],
            })
            .map_err(|e| Error::Config(format!("probe {:?}: {e}", probe.name)));
        }
        let mut correct = 0usize;
        for (x, &y) in probe.data.rows().zip(probe.data.labels()) {
            if model.predict_class(&prepare(x))? == y {
                correct += 1;
            }
        }
        scores.push(ProbeScore {
            name: probe.name.clone(),
            score: correct as f64 / probe.data.len() as f64,
            n_examples: probe.data.len(),
        });
    }
    Ok(ProbeReport {
        checkpoint_id: checkpoint_id.to_string(),
        step,
        scores,
        wall_clock_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Evaluates a checkpoint on raw-feature probes, applying the checkpoint's
/// standardization first.
pub fn evaluate_snapshot(checkpoint: &Checkpoint, suite: &ProbeSuite) -> Result<ProbeReport> {
    evaluate_with(
        &checkpoint.model,
        &checkpoint.checkpoint_id,
        checkpoint.step,
        suite,
        &|x| checkpoint.prepare(x),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaClass {
    Gained,
    Lost,
    Stable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeDelta {
    pub name: String,
    pub from: f64,
    pub to: f64,
    pub delta: f64,
    pub class: DeltaClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticDelta {
    pub from_step: u64,
    pub to_step: u64,
    pub from_checkpoint: String,
    pub to_checkpoint: String,
    pub threshold: f64,
    pub probes: Vec<ProbeDelta>,
}

/// Per-probe `r2 - r1`: gained above `delta`, lost below `-delta`.
///
/// The step order is not enforced, so swapping the arguments negates every
/// delta.
pub fn diff_diagnostics(r1: &ProbeReport, r2: &ProbeReport, delta: f64) -> Result<DiagnosticDelta> {
    if !(delta >= 0.0) {
        return Err(Error::Parameter(format!("stability band must be >= 0, got {delta}")));
    }
    let names = |r: &ProbeReport| r.scores.iter().map(|s| s.name.clone()).collect::<Vec<_>>();
    if names(r1) != names(r2) {
        return Err(Error::Contract(format!(
            "reports come from different probe suites: {:?} vs {:?}",
            names(r1),
            names(r2)
        )));
    }
    let probes = r1
        .scores
        .iter()
        .zip(&r2.scores)
        .map(|(a, b)| {
            let d = b.score - a.score;
            ProbeDelta {
                name: a.name.clone(),
                from: a.score,
                to: b.score,
                delta: d,
                class: if d > delta {
                    DeltaClass::Gained
                } else if d < -delta {
                    DeltaClass::Lost
                } else {
                    DeltaClass::Stable
                },
            }
        })
        .collect();
    Ok(DiagnosticDelta {
        from_step: r1.step,
        to_step: r2.step,
        from_checkpoint: r1.checkpoint_id.clone(),
        to_checkpoint: r2.checkpoint_id.clone(),
        threshold: delta,
        probes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingWeights {
    /// One weight per training example, summing to 1.
    pub weights: Vec<f64>,
    /// Categories whose probe scored below the threshold.
    pub boosted: Vec<String>,
}

/// Upweights training examples whose category probe scored below
/// `threshold` by `boost_factor`, then renormalizes.
pub fn targeted_resample(train: &Dataset, report: &ProbeReport, boost_factor: f64, threshold: f64) -> Result<SamplingWeights> {
    if !(boost_factor >= 1.0 && boost_factor.is_finite()) {
        return Err(Error::Parameter(format!("boost factor must be >= 1, got {boost_factor}")));
    }
    let categories = train.categories.as_ref().ok_or_else(|| {
        Error::Data("targeted resampling needs category tags on the training set (add a \"category\" column)".into())
    })?;
    let boosted: Vec<String> = report
        .scores
        .iter()
        .filter(|s| s.score < threshold)
        .map(|s| s.name.clone())
        .collect();
    let raw: Vec<f64> = categories
        .iter()
        .map(|c| if boosted.contains(c) { boost_factor } else { 1.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(SamplingWeights {
        weights: raw.iter().map(|w| w / total).collect(),
        boosted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSeries {
    pub name: String,
    pub steps: Vec<u64>,
    pub scores: Vec<f64>,
    /// First step whose score reaches the threshold.
    pub acquired_step: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub threshold: f64,
    pub checkpoints: Vec<String>,
    pub probes: Vec<ProbeSeries>,
}

impl Timeline {
    pub fn series(&self, probe: &str) -> Option<&ProbeSeries> {
        self.probes.iter().find(|p| p.name == probe)
    }

    /// `step,probe,score` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,probe,score\n");
        for p in &self.probes {
            for (s, v) in p.steps.iter().zip(&p.scores) {
                out += &format!("{s},{},{v}\n", p.name);
            }
        }
        out
    }
}

/// Per-probe score series across checkpoints and the step at which each
/// probe first reaches `threshold`.
pub fn timeline_report(reports: &[ProbeReport], threshold: f64) -> Result<Timeline> {
    if reports.len() < 2 {
        return Err(Error::Parameter(format!("a timeline needs at least 2 reports, got {}", reports.len())));
    }
    let mut sorted: Vec<&ProbeReport> = reports.iter().collect();
    if sorted.windows(2).any(|w| w[0].step > w[1].step) {
        log::warn!("probe reports were not sorted by step; sorting");
        sorted.sort_by_key(|r| r.step);
    }
    let names: Vec<&str> = sorted[0].scores.iter().map(|s| s.name.as_str()).collect();
    let mut probes = Vec::with_capacity(names.len());
    for name in names {
        let mut series = ProbeSeries {
            name: name.to_string(),
            steps: Vec::new(),
            scores: Vec::new(),
            acquired_step: None,
        };
        for r in &sorted {
            let score = r
                .score(name)
                .ok_or_else(|| Error::Contract(format!("report at step {} lacks probe {name:?}", r.step)))?;
            if score >= threshold && series.acquired_step.is_none() {
                series.acquired_step = Some(r.step);
            }
            series.steps.push(r.step);
            series.scores.push(score);
        }
        probes.push(series);
    }
    Ok(Timeline {
        threshold,
        checkpoints: sorted.iter().map(|r| r.checkpoint_id.clone()).collect(),
        probes,
    })
}
