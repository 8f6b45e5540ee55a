use serde::{Deserialize, Serialize};

use super::gate::{gate_on_tape, select_active, GateConfig};
use super::groups::FeatureGroupSpec;
use super::routing::{Interpretable, RoutingDecision, RoutingMode};
use crate::diffcore::{sigmoid, Mlp, MlpSpec, ParamId, Rng, Var};
use crate::error::{Error, Result};
use crate::model::{check_len, softmax_row, BatchForward, Classifier, ForwardCtx};
use crate::{ParamStore, Tape, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretCCConfig {
    pub groups: FeatureGroupSpec,
    pub num_classes: usize,
    pub discriminator_hidden: Vec<usize>,
    pub expert_hidden: Vec<usize>,
    pub gate: GateConfig,
}

impl InterpretCCConfig {
    pub fn new(groups: FeatureGroupSpec, num_classes: usize) -> Self {
        Self {
            groups,
            num_classes,
            discriminator_hidden: vec![16, 16],
            expert_hidden: vec![16, 16],
            gate: GateConfig::default(),
        }
    }
}

/// Mixture of experts routed over human-specified feature groups.
///
/// A discriminator reads every feature and scores each group. Expert `g` is
/// an MLP whose input layer is sized to group `g`, so it can only ever see
/// that group's features. The output is the softmax of the active experts'
/// logits weighted by their renormalized scores.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpretCCModel {
    config: InterpretCCConfig,
    store: ParamStore,
    discriminator: Mlp,
    experts: Vec<Mlp>,
    imputation: ParamId,
}

fn expert_prefix(g: usize) -> String {
    format!("expert{g}")
}

impl InterpretCCModel {
    pub fn new(config: InterpretCCConfig, rng: &mut Rng) -> Result<Self> {
        config.gate.validate(config.groups.num_groups())?;
        let d = config.groups.num_features();
        let mut store = ParamStore::new();
        let discriminator = Mlp::new(
            &mut store,
            "discriminator",
            MlpSpec::new(d, &config.discriminator_hidden, config.groups.num_groups()),
            rng,
        )?;
        let experts = config
            .groups
            .groups()
            .iter()
            .enumerate()
            .map(|(g, group)| {
                Mlp::new(
                    &mut store,
                    &expert_prefix(g),
                    MlpSpec::new(group.indices.len(), &config.expert_hidden, config.num_classes),
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let imputation = store.add("imputation", Tensor::zeros(&[1, d]), false)?;
        Ok(Self {
            config,
            store,
            discriminator,
            experts,
            imputation,
        })
    }

    pub(crate) fn from_store(config: InterpretCCConfig, store: ParamStore) -> Result<Self> {
        let d = config.groups.num_features();
        let discriminator = Mlp::bind(
            &store,
            "discriminator",
            MlpSpec::new(d, &config.discriminator_hidden, config.groups.num_groups()),
        )?;
        let experts = config
            .groups
            .groups()
            .iter()
            .enumerate()
            .map(|(g, group)| {
                Mlp::bind(
                    &store,
                    &expert_prefix(g),
                    MlpSpec::new(group.indices.len(), &config.expert_hidden, config.num_classes),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let imputation = store
            .id_of("imputation")
            .ok_or_else(|| Error::Format("missing imputation buffer".into()))?;
        Ok(Self {
            config,
            store,
            discriminator,
            experts,
            imputation,
        })
    }

    pub fn config(&self) -> &InterpretCCConfig {
        &self.config
    }

    pub fn set_gate_config(&mut self, gate: GateConfig) -> Result<()> {
        gate.validate(self.config.groups.num_groups())?;
        self.config.gate = gate;
        Ok(())
    }

    pub fn set_imputation(&mut self, values: &[f64]) -> Result<()> {
        check_len(values, self.num_features())?;
        self.store.get_mut(self.imputation).values_mut().copy_from_slice(values);
        Ok(())
    }

    pub fn discriminator(&self) -> &Mlp {
        &self.discriminator
    }

    pub fn experts(&self) -> &[Mlp] {
        &self.experts
    }

    /// Expert `g` applied to the group's features only.
    pub fn expert_logits(&self, g: usize, x: &[f64]) -> Vec<f64> {
        self.experts[g].forward_columns(&self.store, x, &self.config.groups.group(g).indices)
    }

    /// Sigmoid discriminator scores per group.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.discriminator.forward_row(&self.store, x).into_iter().map(sigmoid).collect()
    }
}

impl Classifier for InterpretCCModel {
    fn num_features(&self) -> usize {
        self.config.groups.num_features()
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
        let gate_logits = self.discriminator.forward(tape, &self.store, x)?;
        let scores = tape.sigmoid(gate_logits)?;
        let gate = gate_on_tape(tape, gate_logits, scores, ctx, self.config.gate.selection, rng)?;
        let weighted = tape.mul(gate.mask, scores)?;
        let total = tape.sum_axis(weighted, 1)?;
        let weights = tape.div(weighted, total)?;
        let mut logits: Option<Var> = None;
        for (g, group) in self.config.groups.groups().iter().enumerate() {
            let xg = tape.select_columns(x, &group.indices)?;
            let out = self.experts[g].forward(tape, &self.store, xg)?;
            let wg = tape.select_columns(weights, &[g])?;
            let term = tape.mul(out, wg)?;
            logits = Some(match logits {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });
        }
        let penalty = if ctx.sparsity > 0.0 {
            let m = tape.mean(scores)?;
            Some(tape.scale(m, ctx.sparsity)?)
        } else {
            None
        };
        Ok(BatchForward {
            logits: logits.expect("at least one group"),
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

impl Interpretable for InterpretCCModel {
    fn group_spec(&self) -> &FeatureGroupSpec {
        &self.config.groups
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
        decision.check(self.config.groups.num_groups())?;
        let weight = decision.weigher();
        let mut logits: Option<Vec<f64>> = None;
        for (g, _) in decision.active.iter().enumerate().filter(|(_, &a)| a) {
            let w = weight(g);
            let mut out = self.expert_logits(g, x);
            match &mut logits {
                Some(l) => l.iter_mut().zip(out).for_each(|(l, o)| *l += w * o),
                None => {
                    out.iter_mut().for_each(|o| *o *= w);
                    logits = Some(out);
                }
            }
        }
        Ok(softmax_row(logits.expect("checked non-empty decision")))
    }
}
