//! Fidelity, agreement, consistency and latency measurements over
//! [`Explanation`]s.
//!
//! PGI/PGU are the prediction gaps on important/unimportant features (some
//! literature writes the first as PIU).

mod bench;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explainers::{class_probability, target_class, BlackBox, Explainer, Explanation};

pub use bench::{run_bench, BenchConfig, BenchInputs, BenchReport, ConsistencySummary, GapRow, InstanceMatrices, AGREEMENT_KS};

/// Smoothing added to |attribution| before normalizing to a distribution.
pub const JS_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapDirection {
    /// PGI: impute the top-k features.
    Important,
    /// PGU: impute the bottom-k features.
    Unimportant,
}

/// Feature indices ordered by |attribution| descending, ties to the lower index.
pub fn rank_features(attributions: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..attributions.len()).collect();
    order.sort_by(|&a, &b| attributions[b].abs().total_cmp(&attributions[a].abs()).then(a.cmp(&b)));
    order
}

/// |f(x) - f(x')| on the target-class probability, where `x'` has the top-k
/// (PGI) or bottom-k (PGU) attributed features set to `baseline`.
pub fn prediction_gap(
    f: &dyn BlackBox,
    x: &[f64],
    explanation: &Explanation,
    k: usize,
    direction: GapDirection,
    baseline: &[f64],
) -> Result<f64> {
    let d = x.len();
    if explanation.num_features() != d || baseline.len() != d {
        return Err(Error::Dimension {
            op: "prediction_gap",
            left: vec![d],
            right: vec![explanation.num_features(), baseline.len()],
        });
    }
    if k > d {
        return Err(Error::Parameter(format!("k = {k} exceeds {d} features")));
    }
    if k == 0 {
        return Ok(0.0);
    }
    let class = match explanation.target_class {
        Some(c) => c,
        None => target_class(f, x)?,
    };
    let order = rank_features(&explanation.attributions);
    let removed = match direction {
        GapDirection::Important => &order[..k],
        GapDirection::Unimportant => &order[d - k..],
    };
    let mut z = x.to_vec();
    for &i in removed {
        z[i] = baseline[i];
    }
    let before = class_probability(f, x, class)?;
    let after = class_probability(f, &z, class)?;
    Ok((before - after).abs().min(1.0))
}

fn check_same_dim(e1: &Explanation, e2: &Explanation) -> Result<()> {
    if e1.num_features() != e2.num_features() {
        return Err(Error::Dimension {
            op: "compare explanations",
            left: vec![e1.num_features()],
            right: vec![e2.num_features()],
        });
    }
    Ok(())
}

/// |top-k(a1) ∩ top-k(a2)| / k on |attribution| rankings.
pub fn rank_agreement_values(a1: &[f64], a2: &[f64], k: usize) -> Result<f64> {
    if a1.len() != a2.len() {
        return Err(Error::Dimension {
            op: "rank_agreement",
            left: vec![a1.len()],
            right: vec![a2.len()],
        });
    }
    if k == 0 || k > a1.len() {
        return Err(Error::Parameter(format!("rank agreement needs 1 <= k <= {}, got {k}", a1.len())));
    }
    let mut in_first = vec![false; a1.len()];
    for &i in &rank_features(a1)[..k] {
        in_first[i] = true;
    }
    let shared = rank_features(a2)[..k].iter().filter(|&&i| in_first[i]).count();
    Ok(shared as f64 / k as f64)
}

pub fn rank_agreement(e1: &Explanation, e2: &Explanation, k: usize) -> Result<f64> {
    check_same_dim(e1, e2)?;
    rank_agreement_values(&e1.attributions, &e2.attributions, k)
}

fn to_distribution(a: &[f64]) -> Vec<f64> {
    let total: f64 = a.iter().map(|v| v.abs() + JS_EPSILON).sum();
    a.iter().map(|v| (v.abs() + JS_EPSILON) / total).collect()
}

/// Jensen-Shannon divergence (nats) between the |attribution| distributions.
pub fn js_distance_values(a1: &[f64], a2: &[f64]) -> Result<f64> {
    if a1.len() != a2.len() {
        return Err(Error::Dimension {
            op: "js_distance",
            left: vec![a1.len()],
            right: vec![a2.len()],
        });
    }
    let p = to_distribution(a1);
    let q = to_distribution(a2);
    let mut js = 0.0;
    for (&pi, &qi) in p.iter().zip(&q) {
        let m = 0.5 * (pi + qi);
        js += 0.5 * (pi * (pi / m).ln() + qi * (qi / m).ln());
    }
    Ok(js.clamp(0.0, std::f64::consts::LN_2))
}

pub fn js_distance(e1: &Explanation, e2: &Explanation) -> Result<f64> {
    check_same_dim(e1, e2)?;
    js_distance_values(&e1.attributions, &e2.attributions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum AgreementMetric {
    RankAgreement { k: usize },
    JsDistance,
}

impl AgreementMetric {
    pub fn name(&self) -> &'static str {
        match self {
            Self::RankAgreement { .. } => "rank_agreement",
            Self::JsDistance => "js_distance",
        }
    }

    pub fn k(&self) -> Option<usize> {
        match self {
            Self::RankAgreement { k } => Some(*k),
            Self::JsDistance => None,
        }
    }

    pub fn eval(&self, e1: &Explanation, e2: &Explanation) -> Result<f64> {
        match self {
            Self::RankAgreement { k } => rank_agreement(e1, e2, *k),
            Self::JsDistance => js_distance(e1, e2),
        }
    }

    fn self_value(&self) -> f64 {
        match self {
            Self::RankAgreement { .. } => 1.0,
            Self::JsDistance => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementMatrix {
    pub methods: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub metric_name: String,
    pub k: Option<usize>,
}

impl DisagreementMatrix {
    /// Mean over the strict upper triangle.
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.values.len();
        let mut total = 0.0;
        let mut count = 0;
        for i in 0..n {
            for j in i + 1..n {
                total += self.values[i][j];
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }
}

/// All pairwise values of `metric` between explanations of one instance.
/// Global explanations (no instance id) are compatible with any instance.
pub fn disagreement_matrix(explanations: &[Explanation], metric: AgreementMetric) -> Result<DisagreementMatrix> {
    if explanations.len() < 2 {
        return Err(Error::Parameter("a disagreement matrix needs at least 2 explanations".into()));
    }
    let mut instance: Option<&str> = None;
    for e in explanations {
        check_same_dim(&explanations[0], e)?;
        if let Some(id) = e.instance_id.as_deref() {
            match instance {
                Some(seen) if seen != id => {
                    return Err(Error::Contract(format!(
                        "explanations refer to different instances ({seen} and {id})"
                    )))
                }
                _ => instance = Some(id),
            }
        }
    }
    let n = explanations.len();
    let mut values = vec![vec![metric.self_value(); n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = metric.eval(&explanations[i], &explanations[j])?;
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    Ok(DisagreementMatrix {
        methods: explanations.iter().map(|e| e.method.clone()).collect(),
        values,
        metric_name: metric.name().to_string(),
        k: metric.k(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedPair {
    pub seed_a: u64,
    pub seed_b: u64,
    pub agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub method: String,
    pub n_seeds: usize,
    pub k: usize,
    pub pairs: Vec<SeedPair>,
    pub mean: f64,
    pub min: f64,
}

impl ConsistencyReport {
    pub fn from_explanations(method: &str, explanations: &[Explanation], k: usize) -> Result<Self> {
        if explanations.len() < 2 {
            return Err(Error::Parameter("consistency needs at least 2 seeds".into()));
        }
        let mut pairs = Vec::new();
        for i in 0..explanations.len() {
            for j in i + 1..explanations.len() {
                pairs.push(SeedPair {
                    seed_a: i as u64,
                    seed_b: j as u64,
                    agreement: rank_agreement(&explanations[i], &explanations[j], k)?,
                });
            }
        }
        let mean = pairs.iter().map(|p| p.agreement).sum::<f64>() / pairs.len() as f64;
        let min = pairs.iter().map(|p| p.agreement).fold(1.0, f64::min);
        Ok(Self {
            method: method.to_string(),
            n_seeds: explanations.len(),
            k,
            pairs,
            mean,
            min,
        })
    }

    /// Population variance of the pairwise agreements.
    pub fn variance(&self) -> f64 {
        self.pairs.iter().map(|p| (p.agreement - self.mean).powi(2)).sum::<f64>() / self.pairs.len() as f64
    }
}

/// Runs `explainer` at `x` with seeds `0..n_seeds` and compares every pair.
pub fn consistency_across_seeds(explainer: &dyn Explainer, x: &[f64], n_seeds: usize, k: usize) -> Result<ConsistencyReport> {
    if n_seeds < 2 {
        return Err(Error::Parameter(format!("consistency needs n_seeds >= 2, got {n_seeds}")));
    }
    let explanations = (0..n_seeds as u64)
        .map(|s| explainer.explain(x, s))
        .collect::<Result<Vec<_>>>()?;
    ConsistencyReport::from_explanations(explainer.method(), &explanations, k)
}

pub const MIN_LATENCY_INSTANCES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub method: String,
    pub n_instances: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
}

/// Nearest-rank percentile of a non-empty sample.
pub fn percentile(samples: &[f64], q: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Median of a non-empty sample (mean of the middle pair when even).
pub fn median(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn check_latency_instances(instances: &[Vec<f64>]) -> Result<()> {
    if instances.len() < MIN_LATENCY_INSTANCES {
        return Err(Error::Parameter(format!(
            "latency profile needs at least {MIN_LATENCY_INSTANCES} instances, got {}",
            instances.len()
        )));
    }
    Ok(())
}

/// Mean wall-clock milliseconds of one call over `repeats` calls on `x`.
fn time_per_call(call: &mut dyn FnMut(&[f64]) -> Result<()>, x: &[f64], repeats: usize) -> Result<f64> {
    let repeats = repeats.max(1);
    let start = Instant::now();
    for _ in 0..repeats {
        call(x)?;
    }
    Ok(start.elapsed().as_secs_f64() * 1e3 / repeats as f64)
}

fn summarize(method: &str, samples: &[f64]) -> LatencySummary {
    LatencySummary {
        method: method.to_string(),
        n_instances: samples.len(),
        median_ms: median(samples),
        p95_ms: percentile(samples, 0.95),
    }
}

/// Wall-clock summary of `call` over `instances`. Each instance is timed
/// over `repeats` calls and the per-call mean is recorded, which keeps
/// sub-microsecond calls above timer resolution.
pub fn latency_of<F>(method: &str, instances: &[Vec<f64>], repeats: usize, mut call: F) -> Result<LatencySummary>
where
    F: FnMut(&[f64]) -> Result<()>,
{
    check_latency_instances(instances)?;
    let samples = instances
        .iter()
        .map(|x| time_per_call(&mut call, x, repeats))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(method, &samples))
}

/// One named call for [`latency_interleaved`].
pub struct TimedCall<'a> {
    pub method: String,
    pub repeats: usize,
    pub call: Box<dyn FnMut(&[f64]) -> Result<()> + 'a>,
}

/// [`latency_of`] for several calls at once. Calls are visited round-robin on
/// each instance, so a change in machine speed during the run hits all of
/// them alike and their ratios stay comparable.
pub fn latency_interleaved(calls: &mut [TimedCall<'_>], instances: &[Vec<f64>]) -> Result<Vec<LatencySummary>> {
    check_latency_instances(instances)?;
    let mut samples = vec![Vec::with_capacity(instances.len()); calls.len()];
    for x in instances {
        for (c, s) in calls.iter_mut().zip(&mut samples) {
            s.push(time_per_call(&mut c.call, x, c.repeats)?);
        }
    }
    Ok(calls.iter().zip(&samples).map(|(c, s)| summarize(&c.method, s)).collect())
}

/// Latency of `explainer` (seed 0) over `instances`.
pub fn latency_profile(explainer: &dyn Explainer, instances: &[Vec<f64>], repeats: usize) -> Result<LatencySummary> {
    latency_of(explainer.method(), instances, repeats, |x| explainer.explain(x, 0).map(|_| ()))
}
