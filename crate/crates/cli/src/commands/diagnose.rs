use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use xai_core::data::load_csv;
use xai_core::i2md::{
    run_diagnostics, CheckpointStore, DiagnoseConfig, DiagnosticsRun, Probe, ProbeSuite, DEFAULT_DELTA,
    SKILL_THRESHOLD,
};

use crate::inputs::{DataArgs, Loaded, ModelArgs, TrainingArgs};
use crate::{CliError, Outcome, RunContext};

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Optimizer steps between snapshots.
    #[arg(long, default_value_t = 100)]
    pub cadence: usize,
    /// Up-weight rows of probes that fail at the midpoint snapshot by this factor.
    #[arg(long)]
    pub resample_boost: Option<f64>,
    /// Comma-separated labeled CSVs of raw rows, one probe each, named by file stem
    /// [default: one probe per category of the test split].
    #[arg(long, value_delimiter = ',')]
    pub probes: Option<Vec<PathBuf>>,
    /// Probe accuracy counted as an acquired skill.
    #[arg(long, default_value_t = SKILL_THRESHOLD)]
    pub skill_threshold: f64,
    /// Score change below which a probe is stable between snapshots.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

fn probe_suite(args: &DiagnoseArgs, data: &Loaded) -> Result<ProbeSuite, CliError> {
    let Some(paths) = &args.probes else {
        if data.test.categories.is_none() {
            return Err(CliError::Usage(
                "the dataset has no category column to build probes from; pass --probes".into(),
            ));
        }
        return ProbeSuite::from_categories(&data.test).map_err(CliError::input);
    };
    let mut probes = Vec::with_capacity(paths.len());
    for path in paths {
        let raw = load_csv(path, &args.data.label_column).map_err(CliError::input)?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("probe").to_string();
        if raw.num_features() != data.train.num_features() {
            return Err(CliError::Usage(format!(
                "probe {name} ({}) has {} features, the training data has {}",
                path.display(),
                raw.num_features(),
                data.train.num_features()
            )));
        }
        probes.push(Probe {
            name,
            data: data.stats.apply(&raw)?,
        });
    }
    ProbeSuite::new(probes).map_err(CliError::input)
}

#[derive(Serialize)]
struct DiagnoseOutput<'a> {
    dataset_id: &'a str,
    diagnostics: &'a DiagnosticsRun,
}

pub fn run(args: &DiagnoseArgs, out_root: &Path) -> Result<Outcome, CliError> {
    let data = args.data.load()?;
    let suite = probe_suite(args, &data)?;
    let mut config = DiagnoseConfig::new(args.training.config(), args.cadence);
    config.resample_boost = args.resample_boost;
    config.skill_threshold = args.skill_threshold;
    config.delta = args.delta;
    config.train.validate().map_err(CliError::input)?;
    let mut model = args.model.build(&data, args.training.seed)?;
    let ctx = RunContext::create("diagnose", args, out_root, args.out.as_deref())?;
    let store = CheckpointStore::open(ctx.path("checkpoints"))?;

    let run = run_diagnostics(
        &mut model,
        &data.train,
        &suite,
        &config,
        Some(&data.stats),
        Some(&ctx.fingerprint),
        Some(&store),
    )?;
    ctx.write_json(
        "diagnostics.json",
        &DiagnoseOutput {
            dataset_id: &data.dataset_id,
            diagnostics: &run,
        },
    )?;
    ctx.write_csv("timeline.csv", &run.timeline.to_csv())?;

    let mut stdout = format!("run {}\nsnapshots {}\n", ctx.run_id, run.reports.len());
    let last = run.final_report();
    for series in &run.timeline.probes {
        let acquired = series.acquired_step.map_or("never".to_string(), |s| s.to_string());
        let score = last.score(&series.name).unwrap_or(f64::NAN);
        stdout += &format!("probe {} final {score:.4} acquired {acquired}\n", series.name);
    }
    if let Some(r) = &run.resample {
        stdout += &format!("resampled after step {} boosting {}\n", r.after_step, r.boosted.join(","));
    }
    Ok(Outcome { run_dir: ctx.dir, stdout })
}
