use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::probes::{
    diff_diagnostics, evaluate_model, targeted_resample, timeline_report, DiagnosticDelta, ProbeReport, ProbeSuite,
    Timeline, DEFAULT_DELTA, SKILL_THRESHOLD,
};
use super::store::CheckpointStore;
use crate::data::{Dataset, Standardization};
use crate::error::{Error, Result};
use crate::model::AnyModel;
use crate::train::{TrainConfig, Trainer, TrainingTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseConfig {
    pub train: TrainConfig,
    /// Snapshot every `cadence` optimizer steps (and at the last step).
    pub cadence: usize,
    /// Boost for failing categories, applied after the midpoint snapshot.
    pub resample_boost: Option<f64>,
    pub skill_threshold: f64,
    pub delta: f64,
}

impl DiagnoseConfig {
    pub fn new(train: TrainConfig, cadence: usize) -> Self {
        Self {
            train,
            cadence,
            resample_boost: None,
            skill_threshold: SKILL_THRESHOLD,
            delta: DEFAULT_DELTA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleEvent {
    pub after_step: u64,
    pub boost: f64,
    pub boosted: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRun {
    pub reports: Vec<ProbeReport>,
    /// Differences between consecutive snapshots.
    pub deltas: Vec<DiagnosticDelta>,
    pub timeline: Timeline,
    pub resample: Option<ResampleEvent>,
    pub trace: TrainingTrace,
}

impl DiagnosticsRun {
    pub fn final_report(&self) -> &ProbeReport {
        self.reports.last().expect("at least two reports")
    }
}

/// Trains `model` while snapshotting every `cadence` steps and evaluating
/// `suite` at each snapshot. `train` and the probes must be in the model's
/// input space; `standardization` is only recorded in the checkpoints.
pub fn run_diagnostics(
    model: &mut AnyModel,
    train: &Dataset,
    suite: &ProbeSuite,
    config: &DiagnoseConfig,
    standardization: Option<&Standardization>,
    fingerprint: Option<&serde_json::Value>,
    store: Option<&CheckpointStore>,
) -> Result<DiagnosticsRun> {
    if config.cadence == 0 {
        return Err(Error::Config("snapshot cadence must be at least 1 step".into()));
    }
    for p in suite.probes() {
        if p.data.num_features() != train.num_features() {
            return Err(Error::Config(format!(
                "probe {:?} has {} features but the model takes {}",
                p.name,
                p.data.num_features(),
                train.num_features()
            )));
        }
    }
    let steps_per_epoch = train.len().div_ceil(config.train.batch_size.max(1));
    let total_steps = config.train.epochs * steps_per_epoch;
    if total_steps < 2 {
        return Err(Error::Config("diagnostics need at least two training steps".into()));
    }
    let mut trainer = Trainer::new(config.train.clone())?;
    let mut reports: Vec<ProbeReport> = Vec::new();
    let snapshot = |step: usize, m: &AnyModel, reports: &mut Vec<ProbeReport>| -> Result<()> {
        let ckpt = Checkpoint::snapshot(m, step as u64, standardization, fingerprint)?;
        if let Some(store) = store {
            store.save(&ckpt)?;
        }
        reports.push(evaluate_model(m, &ckpt.checkpoint_id, step as u64, suite)?);
        Ok(())
    };
    snapshot(0, model, &mut reports)?;

    let midpoint = total_steps / 2;
    let mut weights: Option<Vec<f64>> = None;
    let mut resample = None;
    for _ in 0..config.train.epochs {
        let mut pending: Option<ResampleEvent> = None;
        let mut new_weights: Option<Vec<f64>> = None;
        trainer.run_epoch(model, train, weights.as_deref(), &mut |step, m| {
            if step % config.cadence != 0 && step != total_steps {
                return Ok(());
            }
            snapshot(step, m, &mut reports)?;
            if let Some(boost) = config.resample_boost {
                if resample.is_none() && pending.is_none() && step >= midpoint {
                    let report = reports.last().expect("just pushed");
                    let w = targeted_resample(train, report, boost, config.skill_threshold)?;
                    log::info!("step {step}: boosting {:?} by {boost}", w.boosted);
                    pending = Some(ResampleEvent {
                        after_step: step as u64,
                        boost,
                        boosted: w.boosted,
                    });
                    new_weights = Some(w.weights);
                }
            }
            Ok(())
        })?;
        if pending.is_some() {
            resample = pending;
            weights = new_weights;
        }
    }

    let deltas = reports
        .windows(2)
        .map(|w| diff_diagnostics(&w[0], &w[1], config.delta))
        .collect::<Result<Vec<_>>>()?;
    let timeline = timeline_report(&reports, config.skill_threshold)?;
    Ok(DiagnosticsRun {
        reports,
        deltas,
        timeline,
        resample,
        trace: trainer.into_trace(),
    })
}
