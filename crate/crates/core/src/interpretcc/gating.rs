use serde::{Deserialize, Serialize};

use super::gate::{gate_on_tape, select_active, GateConfig};
use super::groups::FeatureGroupSpec;
use super::routing::{Interpretable, RoutingDecision, RoutingMode};
use crate::diffcore::{sigmoid, Mlp, MlpSpec, ParamId, Rng, Var};
use crate::error::{Error, Result};
use crate::model::{check_len, softmax_row, BatchForward, Classifier, ForwardCtx};
use crate::{ParamStore, Tape, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGatingConfig {
    pub feature_names: Vec<String>,
    pub num_classes: usize,
    pub gate_hidden: Vec<usize>,
    pub predictor_hidden: Vec<usize>,
    pub gate: GateConfig,
}

impl FeatureGatingConfig {
    pub fn new(feature_names: Vec<String>, num_classes: usize) -> Self {
        Self {
            feature_names,
            num_classes,
            gate_hidden: vec![16],
            predictor_hidden: vec![16, 16],
            gate: GateConfig::default(),
        }
    }
}

/// Per-instance feature mask in front of a dense predictor.
///
/// The predictor sees `mask * x + (1 - mask) * imputation`, so at inference
/// (binary mask) its output is a function of the open features only.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGatingModel {
    config: FeatureGatingConfig,
    groups: FeatureGroupSpec,
    store: ParamStore,
    gate_net: Mlp,
    predictor: Mlp,
    imputation: ParamId,
}

impl FeatureGatingModel {
    pub fn new(config: FeatureGatingConfig, rng: &mut Rng) -> Result<Self> {
        let d = config.feature_names.len();
        config.gate.validate(d)?;
        let groups = FeatureGroupSpec::singletons(&config.feature_names)?;
        let mut store = ParamStore::new();
        let gate_net = Mlp::new(&mut store, "gate", MlpSpec::new(d, &config.gate_hidden, d), rng)?;
        let predictor = Mlp::new(
            &mut store,
            "predictor",
            MlpSpec::new(d, &config.predictor_hidden, config.num_classes),
            rng,
        )?;
        let imputation = store.add("imputation", Tensor::zeros(&[1, d]), false)?;
        Ok(Self {
            config,
            groups,
            store,
            gate_net,
            predictor,
            imputation,
        })
    }

    pub(crate) fn from_store(config: FeatureGatingConfig, store: ParamStore) -> Result<Self> {
        let d = config.feature_names.len();
        let groups = FeatureGroupSpec::singletons(&config.feature_names)?;
        let gate_net = Mlp::bind(&store, "gate", MlpSpec::new(d, &config.gate_hidden, d))?;
        let predictor = Mlp::bind(&store, "predictor", MlpSpec::new(d, &config.predictor_hidden, config.num_classes))?;
        let imputation = store
            .id_of("imputation")
            .ok_or_else(|| Error::Format("missing imputation buffer".into()))?;
        Ok(Self {
            config,
            groups,
            store,
            gate_net,
            predictor,
            imputation,
        })
    }

    pub fn config(&self) -> &FeatureGatingConfig {
        &self.config
    }

    pub fn set_gate_config(&mut self, gate: GateConfig) -> Result<()> {
        gate.validate(self.num_features())?;
        self.config.gate = gate;
        Ok(())
    }

    pub fn set_imputation(&mut self, values: &[f64]) -> Result<()> {
        check_len(values, self.num_features())?;
        self.store.get_mut(self.imputation).values_mut().copy_from_slice(values);
        Ok(())
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.gate_net.forward_row(&self.store, x).into_iter().map(sigmoid).collect()
    }
}

impl Classifier for FeatureGatingModel {
    fn num_features(&self) -> usize {
        self.config.feature_names.len()
    }

    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward_batch(&self, tape: &mut Tape, x: Var, ctx: &ForwardCtx, rng: &mut Rng) -> Result<BatchForward> {
        let gate_logits = self.gate_net.forward(tape, &self.store, x)?;
        let scores = tape.sigmoid(gate_logits)?;
        let gate = gate_on_tape(tape, gate_logits, scores, ctx, self.config.gate.selection, rng)?;
        let imputation = tape.param(&self.store, self.imputation);
        let centered = tape.sub(x, imputation)?;
        let kept = tape.mul(gate.mask, centered)?;
        let input = tape.add(kept, imputation)?;
        let logits = self.predictor.forward(tape, &self.store, input)?;
        let penalty = if ctx.sparsity > 0.0 {
            let m = tape.mean(scores)?;
            Some(tape.scale(m, ctx.sparsity)?)
        } else {
            None
        };
        Ok(BatchForward {
            logits,
            penalty,
            active_per_row: Some(gate.active_per_row),
        })
    }

    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        let decision = self.route(x)?;
        self.predict_with_routing(x, &decision)
    }

    fn gate_config(&self) -> Option<&GateConfig> {
        Some(&self.config.gate)
    }
}

impl Interpretable for FeatureGatingModel {
    fn group_spec(&self) -> &FeatureGroupSpec {
        &self.groups
    }

    fn imputation(&self) -> &[f64] {
        self.store.get(self.imputation).values()
    }

    fn route(&self, x: &[f64]) -> Result<RoutingDecision> {
        check_len(x, self.num_features())?;
        let scores = self.scores(x);
        let active = select_active(&scores, self.config.gate.selection);
        Ok(RoutingDecision {
            scores,
            active,
            mode: RoutingMode::InferenceHard,
        })
    }

    fn predict_with_routing(&self, x: &[f64], decision: &RoutingDecision) -> Result<Vec<f64>> {
        check_len(x, self.num_features())?;
        decision.check(self.num_features())?;
        let imputation = self.imputation();
        let input: Vec<f64> = (0..x.len())
            .map(|i| if decision.active[i] { x[i] } else { imputation[i] })
            .collect();
        Ok(softmax_row(self.predictor.forward_row(&self.store, &input)))
    }
}
