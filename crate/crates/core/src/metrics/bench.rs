//! The disagreement benchmark: every configured explainer on the same test
//! instances, compared pairwise, across seeds, on fidelity and on latency.

use serde::{Deserialize, Serialize};

use super::{
    consistency_across_seeds, disagreement_matrix, latency_interleaved, prediction_gap, AgreementMetric, ConsistencyReport, TimedCall,
    DisagreementMatrix, GapDirection, LatencySummary,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::explainers::{BlackBox, ExplainTarget, Explainer, ExplainerSpec, Explanation, InterpretableBlackBox};
use crate::interpretcc::Interpretable;

/// Top-k values reported for rank agreement and prediction gaps.
pub const AGREEMENT_KS: [usize; 2] = [3, 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub methods: Vec<ExplainerSpec>,
    pub n_instances: usize,
    pub consistency_instances: usize,
    pub consistency_seeds: usize,
    /// k for cross-seed rank agreement.
    pub consistency_k: usize,
    /// Seed for the per-instance explanations.
    pub seed: u64,
    pub latency_instances: usize,
    /// Calls averaged per instance when one call is faster than 0.5 ms.
    pub latency_repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            methods: ["lime", "shapley_sampled", "permutation"]
                .iter()
                .map(|t| ExplainerSpec::from_tag(t).expect("known tag"))
                .collect(),
            n_instances: 50,
            consistency_instances: 10,
            consistency_seeds: 10,
            consistency_k: 5,
            seed: 0,
            latency_instances: 20,
            latency_repeats: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMatrices {
    pub instance_index: usize,
    pub instance_id: String,
    pub matrices: Vec<DisagreementMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub method: String,
    pub k: usize,
    pub pgi_mean: f64,
    pub pgu_mean: f64,
    /// Fraction of instances with PGI >= PGU.
    pub pgi_ge_pgu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySummary {
    pub method: String,
    pub n_instances: usize,
    pub n_seeds: usize,
    pub k: usize,
    pub mean: f64,
    pub min: f64,
    /// Population variance of all pairwise agreements pooled over instances.
    pub variance: f64,
    pub reports: Vec<ConsistencyReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub dataset_id: String,
    pub model_checkpoint_id: Option<String>,
    pub interpretable_checkpoint_id: Option<String>,
    pub methods: Vec<String>,
    pub per_instance: Vec<InstanceMatrices>,
    /// Element-wise means of the per-instance matrices, one per metric.
    pub aggregate: Vec<DisagreementMatrix>,
    pub consistency: Vec<ConsistencySummary>,
    pub latency: Vec<LatencySummary>,
    pub prediction_gap: Vec<GapRow>,
}

impl BenchReport {
    pub fn aggregate_for(&self, metric_name: &str, k: Option<usize>) -> Option<&DisagreementMatrix> {
        self.aggregate.iter().find(|m| m.metric_name == metric_name && m.k == k)
    }

    pub fn consistency_for(&self, method: &str) -> Option<&ConsistencySummary> {
        self.consistency.iter().find(|c| c.method == method)
    }

    pub fn latency_for(&self, method: &str) -> Option<&LatencySummary> {
        self.latency.iter().find(|l| l.method == method)
    }

    /// Flat `section,method,other,k,value` rows for plotting.
    pub fn aggregates_csv(&self) -> String {
        let mut out = String::from("section,method,other,k,value\n");
        let k_str = |k: Option<usize>| k.map(|k| k.to_string()).unwrap_or_default();
        for m in &self.aggregate {
            for (i, a) in m.methods.iter().enumerate() {
                for (j, b) in m.methods.iter().enumerate() {
                    out += &format!("{},{a},{b},{},{}\n", m.metric_name, k_str(m.k), m.values[i][j]);
                }
            }
        }
        for c in &self.consistency {
            out += &format!("consistency_mean,{},,{},{}\n", c.method, c.k, c.mean);
            out += &format!("consistency_min,{},,{},{}\n", c.method, c.k, c.min);
            out += &format!("consistency_variance,{},,{},{}\n", c.method, c.k, c.variance);
        }
        for l in &self.latency {
            out += &format!("latency_median_ms,{},,,{}\n", l.method, l.median_ms);
            out += &format!("latency_p95_ms,{},,,{}\n", l.method, l.p95_ms);
        }
        for g in &self.prediction_gap {
            out += &format!("pgi_mean,{},,{},{}\n", g.method, g.k, g.pgi_mean);
            out += &format!("pgu_mean,{},,{},{}\n", g.method, g.k, g.pgu_mean);
            out += &format!("pgi_ge_pgu,{},,{},{}\n", g.method, g.k, g.pgi_ge_pgu);
        }
        out
    }
}

/// Models and data a benchmark runs against.
pub struct BenchInputs<'a> {
    pub dataset_id: String,
    pub model: &'a dyn BlackBox,
    pub model_checkpoint_id: Option<String>,
    pub interpretable: Option<&'a dyn Interpretable>,
    pub interpretable_checkpoint_id: Option<String>,
    /// Imputation reference for Shapley coalitions and prediction gaps.
    pub baseline: &'a [f64],
    /// Labeled rows: the instances come from the front, permutation
    /// importance uses all of them.
    pub data: &'a Dataset,
}

fn mean_matrix(matrices: &[&DisagreementMatrix]) -> DisagreementMatrix {
    let first = matrices[0];
    let n = first.values.len();
    let mut values = vec![vec![0.0; n]; n];
    for m in matrices {
        for i in 0..n {
            for j in 0..n {
                values[i][j] += m.values[i][j] / matrices.len() as f64;
            }
        }
    }
    DisagreementMatrix {
        values,
        ..first.clone()
    }
}

pub fn run_bench(config: &BenchConfig, inputs: &BenchInputs<'_>) -> Result<BenchReport> {
    if config.methods.len() < 2 {
        return Err(Error::Config(format!(
            "the benchmark compares methods and needs at least 2, got {}",
            config.methods.len()
        )));
    }
    let n = config.n_instances.min(inputs.data.len());
    if n == 0 {
        return Err(Error::Parameter("no benchmark instances".into()));
    }
    let instances: Vec<Vec<f64>> = (0..n).map(|i| inputs.data.row(i).to_vec()).collect();
    let interpretable_box = inputs.interpretable.map(InterpretableBlackBox);
    let target = ExplainTarget {
        model: inputs.model,
        interpretable: inputs.interpretable,
        baseline: Some(inputs.baseline),
        data: Some(inputs.data),
    };
    let explainers: Vec<Box<dyn Explainer + '_>> =
        config.methods.iter().map(|m| m.build(target)).collect::<Result<_>>()?;
    // the model each method explains, for prediction gaps
    let explained: Vec<&dyn BlackBox> = config
        .methods
        .iter()
        .map(|m| match (m, &interpretable_box) {
            (ExplainerSpec::Interpretcc, Some(b)) => b as &dyn BlackBox,
            _ => inputs.model,
        })
        .collect();

    // global explanations are computed once per seed
    let mut global_cache: Vec<Option<Explanation>> = vec![None; explainers.len()];
    let mut explain = |m: usize, x: &[f64]| -> Result<Explanation> {
        if config.methods[m].is_global() {
            if global_cache[m].is_none() {
                global_cache[m] = Some(explainers[m].explain(x, config.seed)?);
            }
            return Ok(global_cache[m].clone().expect("cached"));
        }
        explainers[m].explain(x, config.seed)
    };

    let metrics: Vec<AgreementMetric> = AGREEMENT_KS
        .iter()
        .filter(|&&k| k <= inputs.model.num_features())
        .map(|&k| AgreementMetric::RankAgreement { k })
        .chain([AgreementMetric::JsDistance])
        .collect();
    let mut per_instance = Vec::with_capacity(n);
    let mut gaps = vec![vec![Vec::new(); AGREEMENT_KS.len()]; explainers.len()];
    for (idx, x) in instances.iter().enumerate() {
        let explanations = (0..explainers.len()).map(|m| explain(m, x)).collect::<Result<Vec<_>>>()?;
        let matrices = metrics
            .iter()
            .map(|&metric| disagreement_matrix(&explanations, metric))
            .collect::<Result<Vec<_>>>()?;
        for (m, e) in explanations.iter().enumerate() {
            for (ki, &k) in AGREEMENT_KS.iter().enumerate() {
                if k > x.len() {
                    continue;
                }
                let pgi = prediction_gap(explained[m], x, e, k, GapDirection::Important, inputs.baseline)?;
                let pgu = prediction_gap(explained[m], x, e, k, GapDirection::Unimportant, inputs.baseline)?;
                gaps[m][ki].push((pgi, pgu));
            }
        }
        per_instance.push(InstanceMatrices {
            instance_index: idx,
            instance_id: crate::explainers::instance_id(x),
            matrices,
        });
    }
    let aggregate = (0..metrics.len())
        .map(|i| mean_matrix(&per_instance.iter().map(|p| &p.matrices[i]).collect::<Vec<_>>()))
        .collect();

    let mut prediction_gap_rows = Vec::new();
    for (m, spec) in config.methods.iter().enumerate() {
        for (ki, &k) in AGREEMENT_KS.iter().enumerate() {
            let cells = &gaps[m][ki];
            if cells.is_empty() {
                continue;
            }
            let count = cells.len() as f64;
            prediction_gap_rows.push(GapRow {
                method: spec.tag().to_string(),
                k,
                pgi_mean: cells.iter().map(|c| c.0).sum::<f64>() / count,
                pgu_mean: cells.iter().map(|c| c.1).sum::<f64>() / count,
                pgi_ge_pgu: cells.iter().filter(|c| c.0 >= c.1).count() as f64 / count,
            });
        }
    }

    let k = config.consistency_k.min(inputs.model.num_features());
    let mut consistency = Vec::new();
    for (m, spec) in config.methods.iter().enumerate() {
        let pool: &[Vec<f64>] = if spec.is_global() {
            &instances[..1]
        } else {
            &instances[..config.consistency_instances.clamp(1, n)]
        };
        let reports = pool
            .iter()
            .map(|x| consistency_across_seeds(explainers[m].as_ref(), x, config.consistency_seeds, k))
            .collect::<Result<Vec<_>>>()?;
        let all: Vec<f64> = reports.iter().flat_map(|r| r.pairs.iter().map(|p| p.agreement)).collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        consistency.push(ConsistencySummary {
            method: spec.tag().to_string(),
            n_instances: reports.len(),
            n_seeds: config.consistency_seeds,
            k,
            mean,
            min: all.iter().copied().fold(1.0, f64::min),
            variance: all.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / all.len() as f64,
            reports,
        });
    }

    let lat_n = config.latency_instances.max(super::MIN_LATENCY_INSTANCES).min(n);
    let lat_instances = &instances[..lat_n];
    let repeats_for = |call: &mut dyn FnMut(&[f64]) -> Result<()>| -> Result<usize> {
        let start = std::time::Instant::now();
        call(&lat_instances[0])?;
        Ok(if start.elapsed().as_secs_f64() < 5e-4 {
            config.latency_repeats
        } else {
            1
        })
    };
    let mut calls: Vec<TimedCall<'_>> = Vec::with_capacity(explainers.len() + 1);
    let mut forward = |x: &[f64]| inputs.model.predict(x).map(|_| ());
    calls.push(TimedCall {
        method: "forward".into(),
        repeats: repeats_for(&mut forward)?,
        call: Box::new(forward),
    });
    for explainer in &explainers {
        let mut call = |x: &[f64]| explainer.explain(x, config.seed).map(|_| ());
        calls.push(TimedCall {
            method: explainer.method().to_string(),
            repeats: repeats_for(&mut call)?,
            call: Box::new(call),
        });
    }
    let latency = latency_interleaved(&mut calls, lat_instances)?;

    Ok(BenchReport {
        dataset_id: inputs.dataset_id.clone(),
        model_checkpoint_id: inputs.model_checkpoint_id.clone(),
        interpretable_checkpoint_id: inputs.interpretable_checkpoint_id.clone(),
        methods: config.methods.iter().map(|m| m.tag().to_string()).collect(),
        per_instance,
        aggregate,
        consistency,
        latency,
        prediction_gap: prediction_gap_rows,
    })
}
