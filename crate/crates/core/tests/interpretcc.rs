use xai_core::data::{generate, split_standardized, SyntheticKind, SyntheticSpec};
use xai_core::interpretcc::{
    FeatureGatingConfig, FeatureGatingModel, FeatureGroupSpec, InterpretCCConfig, InterpretCCModel, Interpretable,
    RoutingDecision, RoutingMode, SelectionMode,
};
use xai_core::model::Classifier;
use xai_core::train::{train, TrainConfig};
use xai_core::{Rng, Tape, Tensor};

fn moe(seed: u64) -> InterpretCCModel {
    let mut rng = Rng::new(seed);
    let mut cfg = InterpretCCConfig::new(FeatureGroupSpec::contiguous(9, 3).unwrap(), 2);
    cfg.discriminator_hidden = vec![8];
    cfg.expert_hidden = vec![6];
    let mut m = InterpretCCModel::new(cfg, &mut rng).unwrap();
    let ids: Vec<_> = m.store().iter().filter(|(_, _, t)| t.requires_grad()).map(|(id, _, _)| id).collect();
    for id in ids {
        m.store_mut().get_mut(id).values_mut().iter_mut().for_each(|v| *v = rng.normal());
    }
    m
}

fn gating(seed: u64) -> FeatureGatingModel {
    let mut rng = Rng::new(seed);
    let mut cfg = FeatureGatingConfig::new((0..7).map(|i| format!("f{i}")).collect(), 3);
    cfg.gate_hidden = vec![8];
    cfg.predictor_hidden = vec![8];
    let mut m = FeatureGatingModel::new(cfg, &mut rng).unwrap();
    let ids: Vec<_> = m.store().iter().filter(|(_, _, t)| t.requires_grad()).map(|(id, _, _)| id).collect();
    for id in ids {
        m.store_mut().get_mut(id).values_mut().iter_mut().for_each(|v| *v = rng.normal());
    }
    m
}

/// Perturbs every feature outside the active groups by an arbitrary finite
/// amount and requires bit-identical probabilities under the same decision.
fn assert_masked<M: Interpretable>(model: &M, pairs: usize, seed: u64) -> usize {
    let mut rng = Rng::new(seed);
    let spec = model.group_spec().clone();
    let d = model.num_features();
    let mut perturbed_features = 0;
    for pair in 0..pairs {
        let x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let decision = model.route(&x).unwrap();
        let used: Vec<bool> = (0..d)
            .map(|i| decision.active_indices().iter().any(|&g| spec.group(g).indices.contains(&i)))
            .collect();
        let base = model.predict_with_routing(&x, &decision).unwrap();
        let scale = [1e-3, 1.0, 1e3, 1e150][pair % 4];
        let mut x2 = x.clone();
        for i in (0..d).filter(|&i| !used[i]) {
            x2[i] += scale * rng.normal();
            perturbed_features += 1;
        }
        let out = model.predict_with_routing(&x2, &decision).unwrap();
        let bits = |v: &[f64]| v.iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&base), bits(&out), "pair {pair}: x {x:?} -> {x2:?}");
    }
    perturbed_features
}

#[test]
fn masking_guarantee_moe() {
    let touched: usize = (0..10).map(|s| assert_masked(&moe(s), 100, s)).sum();
    assert!(touched > 100, "only {touched} inactive features were perturbed");
}

#[test]
fn masking_guarantee_feature_gating() {
    let touched: usize = (0..10).map(|s| assert_masked(&gating(s), 100, s)).sum();
    assert!(touched > 100, "only {touched} inactive features were perturbed");
}

#[test]
fn masking_holds_for_hand_built_decisions() {
    let m = moe(3);
    let mut rng = Rng::new(11);
    for g in 0..3 {
        let mut active = vec![false; 3];
        active[g] = true;
        let decision = RoutingDecision {
            scores: vec![0.2, 0.3, 0.4],
            active,
            mode: RoutingMode::InferenceHard,
        };
        let x: Vec<f64> = (0..9).map(|_| rng.normal()).collect();
        let expected = m.predict_with_routing(&x, &decision).unwrap();
        let logits = m.expert_logits(g, &x);
        let z: f64 = logits.iter().map(|l| (l - logits[0].max(logits[1])).exp()).sum();
        for (p, l) in expected.iter().zip(&logits) {
            assert!((p - (l - logits[0].max(logits[1])).exp() / z).abs() < 1e-12);
        }
    }
}

#[test]
fn routing_and_prediction_are_deterministic() {
    let m = moe(5);
    let mut rng = Rng::new(2);
    for _ in 0..50 {
        let x: Vec<f64> = (0..9).map(|_| rng.normal()).collect();
        let p1 = m.predict(&x).unwrap();
        let p2 = m.predict(&x).unwrap();
        assert_eq!(p1.decision, p2.decision);
        assert_eq!(p1.probabilities, p2.probabilities);
        assert!(p1.decision.num_active() >= 1);
        let composed = m.predict_with_routing(&x, &m.route(&x).unwrap()).unwrap();
        assert_eq!(composed, p1.probabilities);
        assert!((p1.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn top_k_all_groups_activates_everything() {
    let mut m = moe(1);
    let mut gate = m.config().gate.clone();
    gate.selection = SelectionMode::TopK { k: 3 };
    m.set_gate_config(gate).unwrap();
    let d = m.route(&[0.5; 9]).unwrap();
    assert_eq!(d.active, vec![true; 3]);
}

#[test]
fn explanation_mass_sits_on_active_groups() {
    for seed in 0..20 {
        let m = moe(seed);
        let x: Vec<f64> = (0..9).map(|i| (i as f64 * 0.37 + seed as f64).sin()).collect();
        let p = m.predict(&x).unwrap();
        let e = m.explain(&x).unwrap();
        assert_eq!(e.method, "interpretcc");
        assert!((e.attributions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (g, group) in m.group_spec().groups().iter().enumerate() {
            if !p.decision.active[g] {
                assert!(group.indices.iter().all(|&i| e.attributions[i] == 0.0));
            }
        }
        let names: Vec<&str> = e.active_groups.iter().map(|s| s.name.as_str()).collect();
        let expected: Vec<&str> = p.decision.active_indices().iter().map(|&g| m.group_spec().group(g).name.as_str()).collect();
        assert_eq!(names, expected);
    }
}

#[test]
fn feature_gating_inference_mask_is_binary_and_imputes() {
    let m = gating(4);
    let x: Vec<f64> = (0..7).map(|i| i as f64 - 3.0).collect();
    let d = m.route(&x).unwrap();
    let mut expected_input = x.clone();
    for i in 0..7 {
        if !d.active[i] {
            expected_input[i] = m.imputation()[i];
        }
    }
    // An all-active decision on the imputed input must give the same output.
    let all = RoutingDecision {
        active: vec![true; 7],
        ..d.clone()
    };
    assert_eq!(m.predict_with_routing(&x, &d).unwrap(), m.predict_with_routing(&expected_input, &all).unwrap());
}

#[test]
fn expert_input_gradient_is_zero_outside_its_group() {
    let m = moe(8);
    let mut rng = Rng::new(8);
    let x = Tensor::new(vec![4, 9], (0..36).map(|_| rng.normal()).collect()).unwrap().requiring_grad();
    for g in 0..3 {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let cols = &m.group_spec().group(g).indices;
        let xg = tape.select_columns(xv, cols).unwrap();
        let out = m.experts()[g].forward(&mut tape, m.store(), xg).unwrap();
        let s = tape.sum(out).unwrap();
        tape.backward(s).unwrap();
        let grad = tape.grad(xv).unwrap();
        for r in 0..4 {
            for i in (0..9).filter(|i| !cols.contains(i)) {
                assert_eq!(grad[r * 9 + i], 0.0);
            }
        }
    }
}

#[test]
fn switch_moe_training_selects_relevant_group() {
    let mut spec = SyntheticSpec::new(SyntheticKind::SwitchMoe);
    spec.seed = 1;
    let syn = generate(&spec).unwrap();
    let (tr, te, _) = split_standardized(&syn.dataset, 0.8, 1).unwrap();
    let mut cfg = InterpretCCConfig::new(spec.group_spec().unwrap(), 2);
    cfg.gate.sparsity = 0.01;
    let mut m = InterpretCCModel::new(cfg, &mut Rng::new(1)).unwrap();
    train(&mut m, &tr, &TrainConfig { epochs: 40, seed: 1, ..TrainConfig::default() }).unwrap();
    let tags = te.relevant_groups.as_ref().unwrap();
    let mut hits = 0;
    for (i, x) in te.rows().enumerate() {
        let d = m.route(x).unwrap();
        if d.active[tags[i]] && xai_core::model::argmax(&d.scores) == tags[i] {
            hits += 1;
        }
    }
    let rate = hits as f64 / te.len() as f64;
    assert!(rate >= 0.8, "relevant group selected on {rate:.3} of test rows");
}
