use std::time::Instant;

use super::{check_instance, target_class, BlackBox, Explanation};
use crate::diffcore::Rng;
use crate::error::{Error, Result};

/// Largest feature count accepted by [`shapley_exact`] (2^15 model calls).
pub const MAX_EXACT_FEATURES: usize = 15;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact Shapley values of the target-class probability over all 2^d
/// coalitions. Absent features take their `baseline` value.
pub fn shapley_exact(f: &dyn BlackBox, x: &[f64], baseline: &[f64], target: Option<usize>) -> Result<Explanation> {
    check_instance(f, x, Some(baseline))?;
    let d = x.len();
    if d > MAX_EXACT_FEATURES {
        return Err(Error::Parameter(format!(
            "exact Shapley needs 2^{d} model calls; at most {MAX_EXACT_FEATURES} features are allowed, use shapley_sampled instead"
        )));
    }
    let start = Instant::now();
    let class = match target {
        Some(c) => c,
        None => target_class(f, x)?,
    };
    let n = 1usize << d;
    let mut value = vec![0.0; n];
    let mut z = baseline.to_vec();
    for (mask, v) in value.iter_mut().enumerate() {
        for i in 0..d {
            z[i] = if mask >> i & 1 == 1 { x[i] } else { baseline[i] };
        }
        *v = super::class_probability(f, &z, class)?;
    }
    // weight of a coalition of size s not containing i: s!(d-s-1)!/d!
    let weight: Vec<f64> = (0..d).map(|s| 1.0 / (d as f64 * binomial(d - 1, s))).collect();
    let mut phi = vec![0.0; d];
    for mask in 0..n {
        let size = mask.count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if mask >> i & 1 == 0 {
                *p += weight[size] * (value[mask | 1 << i] - value[mask]);
            }
        }
    }
    let mut e = Explanation::new("shapley_exact", phi, class, x);
    e.latency_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(e)
}

/// Monte-Carlo permutation estimate of the Shapley values.
pub fn shapley_sampled(
    f: &dyn BlackBox,
    x: &[f64],
    baseline: &[f64],
    n_permutations: usize,
    rng: &mut Rng,
    target: Option<usize>,
) -> Result<Explanation> {
    check_instance(f, x, Some(baseline))?;
    if n_permutations == 0 {
        return Err(Error::Parameter("n_permutations must be at least 1".into()));
    }
    let start = Instant::now();
    let class = match target {
        Some(c) => c,
        None => target_class(f, x)?,
    };
    let d = x.len();
    let empty = super::class_probability(f, baseline, class)?;
    let mut phi = vec![0.0; d];
    for _ in 0..n_permutations {
        let order = rng.permutation(d);
        let mut z = baseline.to_vec();
        let mut prev = empty;
        for i in order {
            z[i] = x[i];
            let cur = super::class_probability(f, &z, class)?;
            phi[i] += cur - prev;
            prev = cur;
        }
    }
    phi.iter_mut().for_each(|p| *p /= n_permutations as f64);
    let mut e = Explanation::new("shapley_sampled", phi, class, x);
    e.seed = Some(rng.seed());
    e.latency_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(e)
}
