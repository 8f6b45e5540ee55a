//! Minibatch training for every [`Classifier`], with temperature annealing
//! for gated models, optional weighted sampling, and divergence recovery.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::diffcore::{OptimizerKind, Rng};
use crate::error::{Error, Result};
use crate::model::{argmax, Classifier, ForwardCtx, GateForward};
use crate::{OptimizerState, ParamStore, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch objective (task loss plus sparsity penalty).
    pub loss: f64,
    /// Accuracy of the training forward passes.
    pub accuracy: f64,
    /// Mean open gates per row on the training forward passes.
    pub mean_active: Option<f64>,
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochRecord>,
    pub steps: usize,
}

/// Stateful trainer; one optimizer and one random stream per run.
pub struct Trainer {
    config: TrainConfig,
    optimizer: OptimizerState,
    rng: Rng,
    epoch: usize,
    trace: TrainingTrace,
    last_good: Option<(Option<usize>, ParamStore)>,
}

fn is_uniform(weights: &[f64]) -> bool {
    weights.iter().all(|&w| w == weights[0])
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            optimizer: OptimizerState::new(config.optimizer, config.learning_rate)?,
            rng: Rng::new(config.seed),
            config,
            epoch: 0,
            trace: TrainingTrace::default(),
            last_good: None,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Optimizer steps taken so far.
    pub fn step(&self) -> usize {
        self.trace.steps
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn trace(&self) -> &TrainingTrace {
        &self.trace
    }

    pub fn into_trace(self) -> TrainingTrace {
        self.trace
    }

    fn epoch_order(&mut self, n: usize, weights: Option<&[f64]>) -> Result<Vec<usize>> {
        match weights {
            Some(w) if !is_uniform(w) => {
                if w.len() != n {
                    return Err(Error::Dimension {
                        op: "weighted sampling",
                        left: vec![n],
                        right: vec![w.len()],
                    });
                }
                let mut cumulative = Vec::with_capacity(n);
                let mut acc = 0.0;
                for &v in w {
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(Error::Parameter(format!("sampling weight {v} is not a finite non-negative number")));
                    }
                    acc += v;
                    cumulative.push(acc);
                }
                if acc <= 0.0 {
                    return Err(Error::Parameter("sampling weights are all zero".into()));
                }
                Ok((0..n).map(|_| self.rng.weighted_index(&cumulative)).collect())
            }
            _ => Ok(self.rng.permutation(n)),
        }
    }

    /// One pass over `n` examples drawn from `data`: a shuffle, or draws
    /// with replacement in proportion to `weights` when they are not all
    /// equal. `on_step` runs after every optimizer step.
    pub fn run_epoch<M: Classifier + ?Sized>(
        &mut self,
        model: &mut M,
        data: &Dataset,
        weights: Option<&[f64]>,
        on_step: &mut dyn FnMut(usize, &M) -> Result<()>,
    ) -> Result<EpochRecord> {
        if data.is_empty() {
            return Err(Error::Data("cannot train on an empty dataset".into()));
        }
        if data.num_features() != model.num_features() {
            return Err(Error::Dimension {
                op: "train",
                left: vec![model.num_features()],
                right: vec![data.num_features()],
            });
        }
        if let Some(bad) = data.labels().iter().find(|&&y| y >= model.num_classes()) {
            return Err(Error::Data(format!(
                "label {bad} out of range for a {}-class model",
                model.num_classes()
            )));
        }
        if self.last_good.is_none() {
            self.last_good = Some((None, model.store().clone()));
        }
        let gate = model.gate_config().copied();
        let ctx = ForwardCtx {
            gate: GateForward::StraightThrough,
            temperature: gate.map_or(1.0, |g| g.temperature(self.epoch)),
            sparsity: gate.map_or(0.0, |g| g.sparsity),
        };
        let order = self.epoch_order(data.len(), weights)?;
        let (mut loss_sum, mut correct, mut active_sum, mut batches) = (0.0, 0usize, 0usize, 0usize);
        for chunk in order.chunks(self.config.batch_size) {
            let outcome = self.batch_step(model, data, chunk, &ctx);
            let (loss, batch_correct, batch_active) = match outcome {
                Ok(v) => v,
                Err(Error::NonFinite { op }) => return Err(self.diverge(model, f64::NAN, op)),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(self.diverge(model, loss, "loss"));
            }
            loss_sum += loss;
            correct += batch_correct;
            active_sum += batch_active;
            batches += 1;
            self.trace.steps += 1;
            on_step(self.trace.steps, &*model)?;
        }
        let record = EpochRecord {
            epoch: self.epoch,
            loss: loss_sum / batches as f64,
            accuracy: correct as f64 / order.len() as f64,
            mean_active: gate.map(|_| active_sum as f64 / order.len() as f64),
            temperature: gate.map(|_| ctx.temperature),
        };
        log::debug!("epoch {} loss {:.4} accuracy {:.3}", record.epoch, record.loss, record.accuracy);
        self.trace.epochs.push(record.clone());
        self.last_good = Some((Some(self.epoch), model.store().clone()));
        self.epoch += 1;
        Ok(record)
    }

    fn batch_step<M: Classifier + ?Sized>(
        &mut self,
        model: &mut M,
        data: &Dataset,
        rows: &[usize],
        ctx: &ForwardCtx,
    ) -> Result<(f64, usize, usize)> {
        let mut tape = Tape::new();
        let x = tape.constant(data.batch(rows));
        let labels: Vec<usize> = rows.iter().map(|&r| data.labels()[r]).collect();
        let out = model.forward_batch(&mut tape, x, ctx, &mut self.rng)?;
        let classes = model.num_classes();
        let correct = tape
            .value(out.logits)
            .values()
            .chunks(classes)
            .zip(&labels)
            .filter(|(row, &y)| argmax(row) == y)
            .count();
        let active = out.active_per_row.as_ref().map_or(0, |a| a.iter().sum());
        let task = tape.cross_entropy(out.logits, &labels)?;
        let total = match out.penalty {
            Some(p) => tape.add(task, p)?,
            None => task,
        };
        let loss = tape.value(total).item()?;
        tape.backward(total)?;
        let store = model.store_mut();
        tape.drain_param_grads(store)?;
        self.optimizer.step(store)?;
        Ok((loss, correct, active))
    }

    fn diverge<M: Classifier + ?Sized>(&mut self, model: &mut M, loss: f64, op: &str) -> Error {
        let (last_good_epoch, store) = self.last_good.clone().expect("set before the first step");
        *model.store_mut() = store;
        log::warn!("training diverged at epoch {} ({op}); parameters restored", self.epoch);
        Error::Diverged {
            epoch: self.epoch,
            loss,
            last_good_epoch,
        }
    }

    /// Runs the configured number of epochs.
    pub fn fit<M: Classifier + ?Sized>(&mut self, model: &mut M, data: &Dataset) -> Result<&TrainingTrace> {
        for _ in 0..self.config.epochs {
            self.run_epoch(model, data, None, &mut |_, _| Ok(()))?;
        }
        Ok(&self.trace)
    }
}

/// Trains `model` on `data` (expected standardized) and returns the trace.
pub fn train<M: Classifier + ?Sized>(model: &mut M, data: &Dataset, config: &TrainConfig) -> Result<TrainingTrace> {
    let mut trainer = Trainer::new(config.clone())?;
    trainer.fit(model, data)?;
    Ok(trainer.into_trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MlpClassifier;

    fn separable(n: usize, seed: u64) -> Dataset {
        let mut rng = Rng::new(seed);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let (a, b) = (rng.normal(), rng.normal());
            features.extend([a, b]);
            labels.push(usize::from(a + 0.5 * b > 0.0));
        }
        Dataset::new(features, 2, labels, Dataset::default_names(2)).unwrap()
    }

    #[test]
    fn zero_epochs_leaves_model_unchanged() {
        let mut m = MlpClassifier::new(2, &[4], 2, &mut Rng::new(0)).unwrap();
        let before = m.clone();
        let trace = train(
            &mut m,
            &separable(20, 0),
            &TrainConfig {
                epochs: 0,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        assert!(trace.epochs.is_empty());
        assert_eq!(m, before);
    }

    #[test]
    fn learns_separable_data_deterministically() {
        let data = separable(300, 1);
        let cfg = TrainConfig {
            epochs: 40,
            ..TrainConfig::default()
        };
        let mut a = MlpClassifier::new(2, &[8], 2, &mut Rng::new(0)).unwrap();
        let mut b = a.clone();
        let ta = train(&mut a, &data, &cfg).unwrap();
        let tb = train(&mut b, &data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert!(ta.epochs.last().unwrap().accuracy >= 0.95);
        assert_eq!(ta.steps, 40 * 300usize.div_ceil(64));
    }

    #[test]
    fn uniform_weights_match_plain_shuffle() {
        let data = separable(100, 2);
        let m0 = MlpClassifier::new(2, &[4], 2, &mut Rng::new(0)).unwrap();
        let mut a = m0.clone();
        let mut b = m0;
        let mut ta = Trainer::new(TrainConfig::default()).unwrap();
        let mut tb = Trainer::new(TrainConfig::default()).unwrap();
        ta.run_epoch(&mut a, &data, None, &mut |_, _| Ok(())).unwrap();
        tb.run_epoch(&mut b, &data, Some(&[0.01; 100]), &mut |_, _| Ok(())).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_restores_last_good_parameters() {
        let data = separable(64, 3);
        let mut m = MlpClassifier::new(2, &[4], 2, &mut Rng::new(0)).unwrap();
        let mut trainer = Trainer::new(TrainConfig {
            learning_rate: 1e300,
            optimizer: OptimizerKind::Sgd,
            batch_size: 8,
            ..TrainConfig::default()
        })
        .unwrap();
        let before = m.clone();
        let mut result = Ok(());
        for _ in 0..5 {
            result = trainer.run_epoch(&mut m, &data, None, &mut |_, _| Ok(())).map(|_| ());
            if result.is_err() {
                break;
            }
        }
        match result {
            Err(Error::Diverged { last_good_epoch, .. }) => {
                if last_good_epoch.is_none() {
                    assert_eq!(m, before);
                }
                assert!(m.store().iter().all(|(_, _, t)| t.values().iter().all(|v| v.is_finite())));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
