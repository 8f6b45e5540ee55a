use std::time::Instant;

use xai_core::data::{generate, SyntheticKind, SyntheticSpec};
use xai_core::explainers::{
    lime_local, permutation_importance, shapley_exact, shapley_sampled, BlackBox, FnBlackBox, ImportanceMetric,
    LimeConfig,
};
use xai_core::model::MlpClassifier;
use xai_core::Rng;

fn sigmoid_f64(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn binary(p: f64) -> Vec<f64> {
    vec![1.0 - p, p]
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Nonlinear model symmetric in features 0 and 1 that never reads the last feature.
fn constructed(d: usize, rng: &mut Rng) -> impl Fn(&[f64]) -> Vec<f64> + Send + Sync {
    let w: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    move |x: &[f64]| {
        let sym = (x[0] + x[1]).tanh() + x[0] * x[1];
        let rest: f64 = (2..d - 1).map(|i| w[i] * x[i] + if i > 2 { 0.3 * x[i] * x[i - 1] } else { 0.0 }).sum();
        binary(sigmoid_f64(sym + rest))
    }
}

#[test]
fn exact_shapley_axioms_on_constructed_models() {
    for d in [3, 6, 9, 12] {
        for seed in 0..3 {
            let mut rng = Rng::new(seed);
            let f = FnBlackBox::new(d, 2, constructed(d, &mut rng));
            let x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let mut x_sym = x.clone();
            x_sym[1] = x_sym[0];
            let base: Vec<f64> = (0..d).map(|_| 0.5 * rng.normal()).collect();
            let mut base_sym = base.clone();
            base_sym[1] = base_sym[0];
            let e = shapley_exact(&f, &x_sym, &base_sym, Some(1)).unwrap();
            let fx = f.predict(&x_sym).unwrap()[1];
            let fb = f.predict(&base_sym).unwrap()[1];
            let total: f64 = e.attributions.iter().sum();
            assert!((total - (fx - fb)).abs() <= 1e-8, "d={d}: efficiency off by {}", total - (fx - fb));
            assert_eq!(e.attributions[d - 1], 0.0, "d={d}: dummy feature");
            assert!((e.attributions[0] - e.attributions[1]).abs() <= 1e-8, "d={d}: symmetry");
            let e2 = shapley_exact(&f, &x, &base, Some(1)).unwrap();
            assert_eq!(e2.attributions[d - 1], 0.0);
        }
    }
}

#[test]
fn sampled_shapley_approaches_exact_on_mlp() {
    let mut closer = 0;
    for seed in 0..10 {
        let mut rng = Rng::new(seed);
        let mlp = MlpClassifier::new(8, &[16], 2, &mut rng).unwrap();
        let x: Vec<f64> = (0..8).map(|_| 1.5 * rng.normal()).collect();
        let base = vec![0.0; 8];
        let exact = shapley_exact(&mlp, &x, &base, None).unwrap();
        let many = shapley_sampled(&mlp, &x, &base, 10_000, &mut Rng::new(seed + 100), None).unwrap();
        let few = shapley_sampled(&mlp, &x, &base, 100, &mut Rng::new(seed + 100), None).unwrap();
        let err_many = linf(&many.attributions, &exact.attributions);
        assert!(err_many <= 0.05, "seed {seed}: L-inf {err_many}");
        if err_many < linf(&few.attributions, &exact.attributions) {
            closer += 1;
        }
    }
    assert!(closer >= 8, "10,000 permutations beat 100 on only {closer}/10 seeds");
}

#[test]
fn switch_generator_shapley_is_zero_outside_tagged_group() {
    let spec = SyntheticSpec::new(SyntheticKind::SwitchMoe);
    let syn = generate(&spec).unwrap();
    let gen = syn.generator.clone();
    let f = FnBlackBox::new(12, 2, move |x: &[f64]| binary(gen.probability(x)));
    let groups = spec.group_spec().unwrap();
    let tags = syn.dataset.relevant_groups.as_ref().unwrap();
    let base = vec![0.0; 12];
    for i in 0..100 {
        let x = syn.dataset.row(i);
        let e = shapley_exact(&f, x, &base, Some(1)).unwrap();
        for (g, group) in groups.groups().iter().enumerate() {
            if g == tags[i] {
                continue;
            }
            for &j in group.indices.iter().filter(|&&j| j != 0) {
                assert!(e.attributions[j].abs() <= 1e-8, "row {i} feature {j}: {}", e.attributions[j]);
            }
        }
    }
}

#[test]
fn exact_shapley_cost_doubles_per_feature() {
    let time_for = |d: usize| {
        let f = FnBlackBox::new(d, 2, move |x: &[f64]| binary(sigmoid_f64(x.iter().sum::<f64>() / d as f64)));
        let x = vec![1.0; d];
        let base = vec![0.0; d];
        (0..15)
            .map(|_| {
                let t = Instant::now();
                shapley_exact(&f, &x, &base, Some(1)).unwrap();
                t.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    time_for(10);
    let ratio = time_for(11) / time_for(10);
    println!("exact Shapley d=11 / d=10 time ratio {ratio:.3}");
    assert!((1.6..=2.6).contains(&ratio), "d=11 / d=10 time ratio {ratio}");
}

#[test]
fn lime_and_sampled_shapley_are_pure_in_seed() {
    let mut rng = Rng::new(3);
    let mlp = MlpClassifier::new(5, &[8], 2, &mut rng).unwrap();
    let x = [0.3, -1.0, 2.0, 0.1, -0.4];
    let cfg = LimeConfig::default();
    let a = lime_local(&mlp, &x, &cfg, &mut Rng::new(7), None).unwrap();
    let b = lime_local(&mlp, &x, &cfg, &mut Rng::new(7), None).unwrap();
    assert_eq!(a.canonical_json(), b.canonical_json());
    let c = lime_local(&mlp, &x, &cfg, &mut Rng::new(8), None).unwrap();
    assert_ne!(a.attributions, c.attributions);
    let s1 = shapley_sampled(&mlp, &x, &[0.0; 5], 50, &mut Rng::new(7), None).unwrap();
    let s2 = shapley_sampled(&mlp, &x, &[0.0; 5], 50, &mut Rng::new(7), None).unwrap();
    assert_eq!(s1.canonical_json(), s2.canonical_json());
}

#[test]
fn permutation_importance_finds_planted_feature() {
    let mut hits = 0;
    for seed in 0..10 {
        let mut spec = SyntheticSpec::new(SyntheticKind::PlantedLinear);
        spec.seed = seed;
        spec.num_groups = 8;
        spec.n_samples = 500;
        let syn = generate(&spec).unwrap();
        let gen = syn.generator.clone();
        let f = FnBlackBox::new(8, 2, move |x: &[f64]| binary(gen.probability(x)));
        let e = permutation_importance(&f, &syn.dataset, ImportanceMetric::Accuracy, 5, &mut Rng::new(seed)).unwrap();
        let top = xai_core::metrics::rank_features(&e.attributions)[0];
        if top == 0 {
            hits += 1;
        }
        for j in 1..8 {
            assert_eq!(e.attributions[j], 0.0, "seed {seed}: unused feature {j}");
        }
    }
    assert!(hits >= 9, "planted feature ranked first in {hits}/10 seeds");
}
