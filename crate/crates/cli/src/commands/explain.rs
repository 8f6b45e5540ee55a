use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use xai_core::explainers::{ExplainTarget, ExplainerSpec, Explanation};

use crate::inputs::{baseline, read_checkpoint, read_instances};
use crate::{CliError, Outcome, RunContext};

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExplainArgs {
    /// interpretcc, shapley_exact, shapley_sampled, lime or permutation.
    #[arg(long)]
    pub method: String,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Labeled CSV of raw rows, as written by `train` to test.csv.
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long, default_value = "label")]
    pub label_column: String,
    /// Explain only the first N rows.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub n_permutations: usize,
    #[arg(long, default_value_t = 1000)]
    pub lime_samples: usize,
    /// Zero the latency fields so the output is byte-reproducible.
    #[arg(long)]
    pub canonical: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// Method tag with the command-line hyperparameters applied.
pub(crate) fn method_spec(tag: &str, n_permutations: usize, lime_samples: usize) -> Result<ExplainerSpec, CliError> {
    let mut spec = ExplainerSpec::from_tag(tag).map_err(CliError::input)?;
    match &mut spec {
        ExplainerSpec::ShapleySampled { n_permutations: n } => *n = n_permutations,
        ExplainerSpec::Lime(cfg) => cfg.n_samples = lime_samples,
        _ => {}
    }
    Ok(spec)
}

#[derive(Serialize)]
struct ExplainOutput<'a> {
    checkpoint_id: &'a str,
    method: &'a str,
    explanations: &'a [Explanation],
}

pub fn run(args: &ExplainArgs, out_root: &Path) -> Result<Outcome, CliError> {
    let spec = method_spec(&args.method, args.n_permutations, args.lime_samples)?;
    let ckpt = read_checkpoint(&args.checkpoint)?;
    let data = read_instances(&args.instances, &args.label_column, &ckpt)?;
    let base = baseline(&ckpt, &data);
    let explainer = spec.build(ExplainTarget {
        model: &ckpt.model,
        interpretable: ckpt.model.as_interpretable(),
        baseline: Some(&base),
        data: Some(&data),
    })?;
    let ctx = RunContext::create("explain", args, out_root, args.out.as_deref())?;

    let n = if spec.is_global() { 1 } else { args.limit.unwrap_or(data.len()).min(data.len()) };
    let mut explanations = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = explainer.explain(data.row(i), args.seed)?;
        e.checkpoint_id = Some(ckpt.checkpoint_id.clone());
        if args.canonical {
            e.latency_ms = 0.0;
        }
        explanations.push(e);
    }
    log::info!("{} explanations with {}", explanations.len(), spec.tag());
    ctx.write_json(
        "explanations.json",
        &ExplainOutput {
            checkpoint_id: &ckpt.checkpoint_id,
            method: spec.tag(),
            explanations: &explanations,
        },
    )?;
    let stdout = explanations.iter().map(|e| e.to_json() + "\n").collect();
    Ok(Outcome { run_dir: ctx.dir, stdout })
}
