use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use xai_core::metrics::{run_bench, BenchConfig, BenchInputs, BenchReport};

use super::explain::method_spec;
use crate::inputs::{baseline, read_checkpoint, read_instances};
use crate::{CliError, Outcome, RunContext};

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    /// Black-box model that post-hoc methods explain.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Interpretable model for the interpretcc method; must share the standardization.
    #[arg(long)]
    pub interpretable_checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long, default_value = "label")]
    pub label_column: String,
    /// Comma-separated method tags [default: lime,shapley_sampled,permutation, plus interpretcc when available].
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long, default_value_t = 50)]
    pub n_instances: usize,
    #[arg(long, default_value_t = 10)]
    pub consistency_instances: usize,
    #[arg(long, default_value_t = 10)]
    pub consistency_seeds: usize,
    #[arg(long, default_value_t = 5)]
    pub consistency_k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub latency_instances: usize,
    /// Calls averaged per instance when a call is too fast to time alone.
    #[arg(long, default_value_t = 200)]
    pub latency_repeats: usize,
    #[arg(long, default_value_t = 100)]
    pub n_permutations: usize,
    #[arg(long, default_value_t = 1000)]
    pub lime_samples: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct BenchOutput<'a> {
    report: &'a BenchReport,
}

fn latency_table(report: &BenchReport) -> String {
    let mut out = format!("{:<18}{:>14}{:>14}\n", "method", "median_ms", "p95_ms");
    for l in &report.latency {
        out += &format!("{:<18}{:>14.4}{:>14.4}\n", l.method, l.median_ms, l.p95_ms);
    }
    out
}

pub fn run(args: &BenchArgs, out_root: &Path) -> Result<Outcome, CliError> {
    let ckpt = read_checkpoint(&args.checkpoint)?;
    let interpretable = args.interpretable_checkpoint.as_deref().map(read_checkpoint).transpose()?;
    if let Some(ic) = &interpretable {
        if ic.standardization != ckpt.standardization {
            return Err(CliError::Usage(format!(
                "{} and {} were trained with different standardizations",
                args.checkpoint.display(),
                args.interpretable_checkpoint.as_ref().expect("set").display()
            )));
        }
        if ic.model.as_interpretable().is_none() {
            return Err(CliError::Usage(format!(
                "--interpretable-checkpoint holds a {} model, not an interpretable one",
                ic.model.kind()
            )));
        }
    }
    let interp = interpretable
        .as_ref()
        .and_then(|c| c.model.as_interpretable())
        .or_else(|| ckpt.model.as_interpretable());
    let tags: Vec<String> = match &args.methods {
        Some(m) => m.clone(),
        None => {
            let mut t: Vec<String> = ["lime", "shapley_sampled", "permutation"].map(String::from).to_vec();
            if interp.is_some() {
                t.push("interpretcc".into());
            }
            t
        }
    };
    let methods = tags
        .iter()
        .map(|t| method_spec(t, args.n_permutations, args.lime_samples))
        .collect::<Result<Vec<_>, _>>()?;
    if methods.len() < 2 {
        return Err(CliError::Usage(format!(
            "bench compares explainers and needs at least 2 methods, got {}",
            methods.len()
        )));
    }
    let data = read_instances(&args.instances, &args.label_column, &ckpt)?;
    let base = baseline(&ckpt, &data);
    let config = BenchConfig {
        methods,
        n_instances: args.n_instances,
        consistency_instances: args.consistency_instances,
        consistency_seeds: args.consistency_seeds,
        consistency_k: args.consistency_k,
        seed: args.seed,
        latency_instances: args.latency_instances,
        latency_repeats: args.latency_repeats,
    };
    let ctx = RunContext::create("bench", args, out_root, args.out.as_deref())?;
    let dataset_id = args
        .instances
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("instances")
        .to_string();
    let report = run_bench(
        &config,
        &BenchInputs {
            dataset_id,
            model: &ckpt.model,
            model_checkpoint_id: Some(ckpt.checkpoint_id.clone()),
            interpretable: interp,
            interpretable_checkpoint_id: interpretable
                .as_ref()
                .map(|c| c.checkpoint_id.clone())
                .or_else(|| interp.map(|_| ckpt.checkpoint_id.clone())),
            baseline: &base,
            data: &data,
        },
    )?;
    ctx.write_json("bench.json", &BenchOutput { report: &report })?;
    ctx.write_csv("bench.csv", &report.aggregates_csv())?;
    Ok(Outcome {
        stdout: format!("run {}\n{}", ctx.run_id, latency_table(&report)),
        run_dir: ctx.dir,
    })
}
