//! Iterative model diagnostics: content-addressed checkpoints, probe suites
//! evaluated per snapshot, differences between snapshots, skill timelines
//! and targeted resampling of weak categories.

mod checkpoint;
mod diagnose;
mod probes;
mod store;

pub use checkpoint::{content_id, Checkpoint, ModelConfig, FORMAT_VERSION};
pub use diagnose::{run_diagnostics, DiagnoseConfig, DiagnosticsRun, ResampleEvent};
pub use probes::{
    diff_diagnostics, evaluate_model, evaluate_snapshot, targeted_resample, timeline_report, DeltaClass,
    DiagnosticDelta, Probe, ProbeDelta, ProbeReport, ProbeScore, ProbeSeries, ProbeSuite, SamplingWeights, Timeline,
    DEFAULT_DELTA, SKILL_THRESHOLD,
};
pub use store::{load_checkpoint, CheckpointStore, IndexEntry, INDEX_FILE};
