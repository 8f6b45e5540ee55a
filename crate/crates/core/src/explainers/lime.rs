use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_instance, class_probability, target_class, BlackBox, Explanation};
use crate::diffcore::Rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// Defaults to `0.75 * sqrt(d)` when unset.
    pub kernel_width: Option<f64>,
    pub ridge: f64,
    /// Standard deviation of the Gaussian perturbations around `x`.
    pub perturbation_std: f64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            kernel_width: None,
            ridge: 1e-3,
            perturbation_std: 1.0,
        }
    }
}

const MAX_RIDGE_RETRIES: usize = 8;

/// Local surrogate: ridge-regularized weighted least squares on Gaussian
/// perturbations of `x`, weighted by an exponential kernel on distance.
/// Returns the surrogate's per-feature coefficients.
pub fn lime_local(
    f: &dyn BlackBox,
    x: &[f64],
    config: &LimeConfig,
    rng: &mut Rng,
    target: Option<usize>,
) -> Result<Explanation> {
    check_instance(f, x, None)?;
    let d = x.len();
    let width = config.kernel_width.unwrap_or(0.75 * (d as f64).sqrt());
    if config.n_samples < d + 2 || !(width > 0.0) || !(config.ridge >= 0.0) || !(config.perturbation_std > 0.0) {
        return Err(Error::Parameter(format!(
            "invalid LIME config: n_samples {}, kernel width {width}, ridge {}, std {}",
            config.n_samples, config.ridge, config.perturbation_std
        )));
    }
    let start = Instant::now();
    let class = match target {
        Some(c) => c,
        None => target_class(f, x)?,
    };

    // design columns: intercept, then offsets from x
    let p = d + 1;
    let mut xtwx = DMatrix::<f64>::zeros(p, p);
    let mut xtwy = DVector::<f64>::zeros(p);
    let mut z = vec![0.0; d];
    let mut row = vec![1.0; p];
    for _ in 0..config.n_samples {
        let mut dist2 = 0.0;
        for i in 0..d {
            let off = config.perturbation_std * rng.normal();
            z[i] = x[i] + off;
            row[i + 1] = off;
            dist2 += off * off;
        }
        let w = (-dist2 / (width * width)).exp();
        let y = class_probability(f, &z, class)?;
        for a in 0..p {
            let wa = w * row[a];
            xtwy[a] += wa * y;
            for b in a..p {
                xtwx[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtwx[(a, b)] = xtwx[(b, a)];
        }
    }

    let mut ridge = config.ridge;
    let mut attempt = 0;
    let beta = loop {
        let mut m = xtwx.clone();
        for i in 1..p {
            m[(i, i)] += ridge;
        }
        if let Some(chol) = m.cholesky() {
            break chol.solve(&xtwy);
        }
        attempt += 1;
        if attempt > MAX_RIDGE_RETRIES {
            return Err(Error::Domain {
                op: "lime",
                detail: format!("weighted normal equations stay singular up to ridge {ridge}"),
            });
        }
        ridge = if ridge > 0.0 { ridge * 10.0 } else { 1e-6 };
        log::warn!("LIME system not positive definite, retrying with ridge {ridge}");
    };

    let attributions: Vec<f64> = beta.iter().skip(1).copied().collect();
    if attributions.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "lime" });
    }
    let mut e = Explanation::new("lime", attributions, class, x);
    e.seed = Some(rng.seed());
    e.latency_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(e)
}
