//! Discrete gates: Gumbel-sigmoid sampling with a straight-through estimator
//! for training, deterministic thresholding for inference.

use serde::{Deserialize, Serialize};

use crate::diffcore::Rng;
use crate::error::{Error, Result};
use crate::model::{ForwardCtx, GateForward};
use crate::{Tape, Tensor};
use crate::diffcore::Var;

/// Score at or above which a gate is open in threshold mode.
pub const GATE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionMode {
    /// Open every gate with score >= 0.5; if none clears it, open the argmax.
    Threshold,
    /// Open the `k` highest-scoring gates, ties to the lower index.
    TopK { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    /// Sparsity coefficient (lambda) on the mean gate score.
    pub sparsity: f64,
    pub temperature_start: f64,
    pub temperature_end: f64,
    /// Per-epoch multiplicative temperature decay, in (0, 1].
    pub anneal_rate: f64,
    pub selection: SelectionMode,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            sparsity: 0.1,
            temperature_start: 5.0,
            temperature_end: 0.5,
            anneal_rate: 0.95,
            selection: SelectionMode::Threshold,
        }
    }
}

impl GateConfig {
    pub fn validate(&self, num_gates: usize) -> Result<()> {
        if !(self.sparsity >= 0.0 && self.sparsity.is_finite()) {
            return Err(Error::Parameter(format!("sparsity coefficient must be >= 0, got {}", self.sparsity)));
        }
        if !(self.temperature_end > 0.0 && self.temperature_start >= self.temperature_end) {
            return Err(Error::Parameter(format!(
                "temperatures must satisfy start >= end > 0, got {} and {}",
                self.temperature_start, self.temperature_end
            )));
        }
        if !(self.anneal_rate > 0.0 && self.anneal_rate <= 1.0) {
            return Err(Error::Parameter(format!("anneal rate must be in (0, 1], got {}", self.anneal_rate)));
        }
        if let SelectionMode::TopK { k } = self.selection {
            if k == 0 || k > num_gates {
                return Err(Error::Parameter(format!("top-k needs 1 <= k <= {num_gates}, got {k}")));
            }
        }
        Ok(())
    }

    /// `max(end, start * rate^epoch)`.
    pub fn temperature(&self, epoch: usize) -> f64 {
        (self.temperature_start * self.anneal_rate.powi(epoch as i32)).max(self.temperature_end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    TrainSoft,
    InferenceHard,
}

/// One draw of a mask: the relaxed sample and the value used on the forward path.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSample {
    pub relaxed: Vec<f64>,
    pub forward: Vec<f64>,
}

fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

/// Samples a mask from per-unit open probabilities.
///
/// `TrainSoft` draws `sigmoid((logit(p) + L) / temperature)` with `L`
/// standard logistic and forwards its rounding, so the forward value is
/// Bernoulli(p) at any temperature. `InferenceHard` thresholds `p` at 0.5 and
/// consumes no randomness.
pub fn hard_mask(probabilities: &[f64], temperature: f64, rng: &mut Rng, mode: MaskMode) -> Result<MaskSample> {
    if !(temperature > 0.0) {
        return Err(Error::Parameter(format!("temperature must be positive, got {temperature}")));
    }
    if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Parameter(format!("probability {p} outside [0, 1]")));
    }
    match mode {
        MaskMode::InferenceHard => {
            let forward: Vec<f64> = probabilities
                .iter()
                .map(|&p| if p >= GATE_THRESHOLD { 1.0 } else { 0.0 })
                .collect();
            Ok(MaskSample {
                relaxed: forward.clone(),
                forward,
            })
        }
        MaskMode::TrainSoft => {
            let relaxed: Vec<f64> = probabilities
                .iter()
                .map(|&p| crate::diffcore::sigmoid((logit(p) + rng.logistic()) / temperature))
                .collect();
            let forward = relaxed.iter().map(|&s| if s >= 0.5 { 1.0 } else { 0.0 }).collect();
            Ok(MaskSample { relaxed, forward })
        }
    }
}

/// Inference selection over one row of scores. Never returns an empty set.
pub fn select_active(scores: &[f64], selection: SelectionMode) -> Vec<bool> {
    match selection {
        SelectionMode::Threshold => {
            let mut active: Vec<bool> = scores.iter().map(|&s| s >= GATE_THRESHOLD).collect();
            if !active.iter().any(|&a| a) && !scores.is_empty() {
                active[crate::model::argmax(scores)] = true;
            }
            active
        }
        SelectionMode::TopK { k } => {
            let mut order: Vec<usize> = (0..scores.len()).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            let mut active = vec![false; scores.len()];
            for &g in order.iter().take(k.max(1)) {
                active[g] = true;
            }
            active
        }
    }
}

/// `sparsity * mean(scores)`: the expected fraction of open gates under
/// hard thresholding, scaled.
pub fn sparsity_penalty(scores: &[f64], sparsity: f64) -> Result<f64> {
    if !(sparsity >= 0.0) {
        return Err(Error::Parameter(format!("sparsity coefficient must be >= 0, got {sparsity}")));
    }
    if sparsity == 0.0 || scores.is_empty() {
        return Ok(0.0);
    }
    Ok(sparsity * scores.iter().sum::<f64>() / scores.len() as f64)
}

pub(crate) struct TapeGate {
    /// `[batch, gates]` mask to multiply with.
    pub mask: Var,
    pub active_per_row: Vec<usize>,
}

/// Builds the gate mask on the tape from `[batch, gates]` logits and scores.
pub(crate) fn gate_on_tape(
    tape: &mut Tape,
    logits: Var,
    scores: Var,
    ctx: &ForwardCtx,
    selection: SelectionMode,
    rng: &mut Rng,
) -> Result<TapeGate> {
    let shape = tape.shape(logits).to_vec();
    let (rows, width) = (shape[0], shape[1]);
    let rows_of = |v: &[f64]| v.chunks(width).map(<[f64]>::to_vec).collect::<Vec<_>>();
    let hard_rows = |rows: &[Vec<f64>]| -> (Vec<f64>, Vec<usize>) {
        let mut flat = Vec::with_capacity(rows.len() * width);
        let mut counts = Vec::with_capacity(rows.len());
        for r in rows {
            let active = select_active(r, selection);
            counts.push(active.iter().filter(|&&a| a).count());
            flat.extend(active.iter().map(|&a| if a { 1.0 } else { 0.0 }));
        }
        (flat, counts)
    };
    match ctx.gate {
        GateForward::Hard => {
            let (flat, counts) = hard_rows(&rows_of(tape.value(scores).values()));
            let mask = tape.constant(Tensor::new(shape, flat)?);
            Ok(TapeGate {
                mask,
                active_per_row: counts,
            })
        }
        GateForward::StraightThrough | GateForward::Relaxed => {
            if !(ctx.temperature > 0.0) {
                return Err(Error::Parameter(format!("temperature must be positive, got {}", ctx.temperature)));
            }
            let noise: Vec<f64> = (0..rows * width).map(|_| rng.logistic()).collect();
            let noise = tape.constant(Tensor::new(shape.clone(), noise)?);
            let z = tape.add(logits, noise)?;
            let z = tape.scale(z, 1.0 / ctx.temperature)?;
            let soft = tape.sigmoid(z)?;
            let (flat, counts) = hard_rows(&rows_of(tape.value(soft).values()));
            let mask = if ctx.gate == GateForward::Relaxed {
                soft
            } else {
                tape.straight_through(soft, Tensor::new(shape, flat)?)?
            };
            Ok(TapeGate {
                mask,
                active_per_row: counts,
            })
        }
    }
}
