use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use xai_core::data::write_csv;
use xai_core::i2md::{Checkpoint, CheckpointStore};
use xai_core::model::{AnyModel, Classifier};
use xai_core::train::{train, TrainingTrace};
use xai_core::Error;

use super::display_rel;
use crate::inputs::{DataArgs, Loaded, ModelArgs, TrainingArgs};
use crate::{CliError, Outcome, RunContext};

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Run directory; defaults to `<out-root>/train-<run id>`.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct TrainSummary<'a> {
    dataset_id: &'a str,
    model: String,
    checkpoint_id: &'a str,
    checkpoint: String,
    train_accuracy: f64,
    test_accuracy: f64,
    /// Mean number of open gates per test row.
    mean_active: Option<f64>,
    /// Test rows routed to their planted group (switch_moe with generator groups).
    group_selection_rate: Option<f64>,
    trace: &'a TrainingTrace,
}

fn accuracy(model: &AnyModel, data: &xai_core::data::Dataset) -> Result<f64, CliError> {
    let mut hits = 0usize;
    for (x, &y) in data.rows().zip(data.labels()) {
        if model.predict_class(x)? == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Mean active gates and, when the data carries planted groups that match
/// the model's groups, how often the planted group is open and scores highest.
fn routing_stats(model: &AnyModel, data: &Loaded) -> Result<(Option<f64>, Option<f64>), CliError> {
    let Some(m) = model.as_interpretable() else {
        return Ok((None, None));
    };
    let tags = match (model, &data.test.relevant_groups) {
        (AnyModel::InterpretCC(_), Some(tags)) if data.generator_groups => Some(tags),
        _ => None,
    };
    let (mut active, mut hits) = (0usize, 0usize);
    for (i, x) in data.test.rows().enumerate() {
        let d = m.route(x)?;
        active += d.num_active();
        if let Some(tags) = tags {
            if d.active[tags[i]] && xai_core::model::argmax(&d.scores) == tags[i] {
                hits += 1;
            }
        }
    }
    let n = data.test.len() as f64;
    Ok((Some(active as f64 / n), tags.map(|_| hits as f64 / n)))
}

pub fn run(args: &TrainArgs, out_root: &Path) -> Result<Outcome, CliError> {
    let data = args.data.load()?;
    let config = args.training.config();
    config.validate().map_err(CliError::input)?;
    let mut model = args.model.build(&data, args.training.seed)?;
    let ctx = RunContext::create("train", args, out_root, args.out.as_deref())?;

    let trace = train(&mut model, &data.train, &config)?;
    let store = CheckpointStore::open(ctx.path("checkpoints"))?;
    let ckpt = Checkpoint::snapshot(&model, trace.steps as u64, Some(&data.stats), Some(&ctx.fingerprint))?;
    let ckpt_path = store.save(&ckpt)?;

    let test_csv = ctx.path("test.csv");
    write_csv(&data.raw_test, &test_csv, &args.data.label_column)?;
    let groups_path = ctx.path("groups.json");
    std::fs::write(&groups_path, data.groups.to_json_pretty() + "\n").map_err(|source| Error::Io {
        path: groups_path.clone(),
        source,
    })?;

    let mut trace_csv = String::from("epoch,loss,accuracy,mean_active,temperature\n");
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for e in &trace.epochs {
        trace_csv += &format!("{},{},{},{},{}\n", e.epoch, e.loss, e.accuracy, opt(e.mean_active), opt(e.temperature));
    }
    ctx.write_csv("trace.csv", &trace_csv)?;

    let test_accuracy = accuracy(&model, &data.test)?;
    let (mean_active, group_selection_rate) = routing_stats(&model, &data)?;
    let summary = TrainSummary {
        dataset_id: &data.dataset_id,
        model: model.kind().to_string(),
        checkpoint_id: &ckpt.checkpoint_id,
        checkpoint: display_rel(&ckpt_path, &ctx.dir),
        train_accuracy: accuracy(&model, &data.train)?,
        test_accuracy,
        mean_active,
        group_selection_rate,
        trace: &trace,
    };
    ctx.write_json("train.json", &summary)?;

    let mut stdout = format!(
        "run {}\ncheckpoint {}\ntest_accuracy {test_accuracy:.4}\n",
        ctx.run_id,
        ckpt_path.display()
    );
    if let Some(a) = mean_active {
        stdout += &format!("mean_active {a:.3}\n");
    }
    if let Some(r) = group_selection_rate {
        stdout += &format!("group_selection_rate {r:.4}\n");
    }
    Ok(Outcome { run_dir: ctx.dir, stdout })
}
