use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{check_instance, BlackBox, Explanation};
use crate::data::Dataset;
use crate::diffcore::Rng;
use crate::error::{Error, Result};
use crate::model::argmax;

pub const DEFAULT_REPEATS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMetric {
    #[default]
    Accuracy,
    /// Negative mean log-loss, so that larger is better like accuracy.
    NegLogLoss,
}

impl ImportanceMetric {
    fn score(self, f: &dyn BlackBox, rows: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for (x, &y) in rows.iter().zip(labels) {
            let p = f.predict(x)?;
            total += match self {
                ImportanceMetric::Accuracy => f64::from(u8::from(argmax(&p) == y)),
                ImportanceMetric::NegLogLoss => p.get(y).copied().unwrap_or(0.0).max(1e-12).ln(),
            };
        }
        Ok(total / rows.len() as f64)
    }
}

/// Global importance of each feature: the mean drop in `metric` when that
/// feature's column is shuffled across `data`, over `repeats` shuffles.
pub fn permutation_importance(
    f: &dyn BlackBox,
    data: &Dataset,
    metric: ImportanceMetric,
    repeats: usize,
    rng: &mut Rng,
) -> Result<Explanation> {
    if data.is_empty() || repeats == 0 {
        return Err(Error::Parameter("permutation importance needs data and at least one repeat".into()));
    }
    check_instance(f, data.row(0), None)?;
    let start = Instant::now();
    let base_rows: Vec<Vec<f64>> = (0..data.len()).map(|i| data.row(i).to_vec()).collect();
    let labels = data.labels();
    let reference = metric.score(f, &base_rows, labels)?;
    let d = data.num_features();
    let mut importance = vec![0.0; d];
    let mut rows = base_rows.clone();
    for (j, imp) in importance.iter_mut().enumerate() {
        let mut drop = 0.0;
        for _ in 0..repeats {
            let perm = rng.permutation(rows.len());
            for (r, &src) in perm.iter().enumerate() {
                rows[r][j] = base_rows[src][j];
            }
            drop += reference - metric.score(f, &rows, labels)?;
        }
        for (r, row) in rows.iter_mut().enumerate() {
            row[j] = base_rows[r][j];
        }
        *imp = drop / repeats as f64;
    }
    let mut e = Explanation::global("permutation", importance);
    e.seed = Some(rng.seed());
    e.latency_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(e)
}
