use proptest::prelude::*;

use xai_core::data::Dataset;
use xai_core::i2md::{diff_diagnostics, targeted_resample, DeltaClass, ProbeReport, ProbeScore};
use xai_core::interpretcc::{hard_mask, sparsity_penalty, MaskMode};
use xai_core::metrics::{js_distance_values, rank_agreement_values};
use xai_core::{Rng, Tape, Tensor};

fn attributions(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, d)
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..12).prop_flat_map(|d| (attributions(d), attributions(d)))
}

fn report(scores: &[(&str, f64)], step: u64) -> ProbeReport {
    ProbeReport {
        checkpoint_id: format!("c{step}"),
        step,
        scores: scores
            .iter()
            .map(|&(name, score)| ProbeScore {
                name: name.to_string(),
                score,
                n_examples: 10,
            })
            .collect(),
        wall_clock_ms: 0.0,
    }
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(values in prop::collection::vec(-1e3..1e3f64, 12), axis in 0usize..2) {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![3, 4], values).unwrap());
        let y = tape.softmax(x, axis).unwrap();
        let out = tape.value(y).values();
        let (outer, len) = if axis == 1 { (3, 4) } else { (4, 3) };
        for o in 0..outer {
            let total: f64 = (0..len)
                .map(|k| if axis == 1 { out[o * 4 + k] } else { out[k * 4 + o] })
                .sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn agreement_metrics_are_symmetric_and_bounded((a, b) in pair(), k in 1usize..12) {
        let k = k.min(a.len());
        let ab = rank_agreement_values(&a, &b, k).unwrap();
        prop_assert_eq!(ab, rank_agreement_values(&b, &a, k).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(rank_agreement_values(&a, &a, k).unwrap(), 1.0);
        let js = js_distance_values(&a, &b).unwrap();
        prop_assert!((js - js_distance_values(&b, &a).unwrap()).abs() <= 1e-15);
        prop_assert!((0.0..=std::f64::consts::LN_2 + 1e-12).contains(&js));
        prop_assert!(js_distance_values(&a, &a).unwrap().abs() <= 1e-15);
    }

    #[test]
    fn agreement_metrics_ignore_positive_scale((a, b) in pair(), c in 1e-3..1e3f64, k in 1usize..12) {
        let k = k.min(a.len());
        let sa: Vec<f64> = a.iter().map(|v| v * c).collect();
        let sb: Vec<f64> = b.iter().map(|v| v * c).collect();
        prop_assert_eq!(rank_agreement_values(&a, &b, k).unwrap(), rank_agreement_values(&sa, &sb, k).unwrap());
        let before = js_distance_values(&a, &b).unwrap();
        let after = js_distance_values(&sa, &sb).unwrap();
        prop_assert!((before - after).abs() <= 1e-9, "{} vs {}", before, after);
    }

    #[test]
    fn resample_preserves_total_weight(
        cats in prop::collection::vec(0usize..3, 1..200),
        scores in prop::collection::vec(0.0..1.0f64, 3),
        boost in 1.0..50.0f64,
    ) {
        let names = ["a", "b", "c"];
        let n = cats.len();
        let data = Dataset::new(vec![0.0; n], 1, vec![0; n], Dataset::default_names(1))
            .unwrap()
            .with_categories(cats.iter().map(|&c| names[c].to_string()).collect())
            .unwrap();
        let r = report(&[("a", scores[0]), ("b", scores[1]), ("c", scores[2])], 1);
        let w = targeted_resample(&data, &r, boost, 0.8).unwrap();
        prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(w.weights.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn diff_is_antisymmetric(s1 in prop::collection::vec(0.0..1.0f64, 3), s2 in prop::collection::vec(0.0..1.0f64, 3)) {
        let r1 = report(&[("a", s1[0]), ("b", s1[1]), ("c", s1[2])], 1);
        let r2 = report(&[("a", s2[0]), ("b", s2[1]), ("c", s2[2])], 2);
        let fwd = diff_diagnostics(&r1, &r2, 0.05).unwrap();
        let back = diff_diagnostics(&r2, &r1, 0.05).unwrap();
        for (f, b) in fwd.probes.iter().zip(&back.probes) {
            prop_assert_eq!(f.delta, -b.delta);
            let mirrored = match f.class {
                DeltaClass::Gained => DeltaClass::Lost,
                DeltaClass::Lost => DeltaClass::Gained,
                DeltaClass::Stable => DeltaClass::Stable,
            };
            prop_assert_eq!(b.class, mirrored);
        }
        let same = diff_diagnostics(&r1, &r1, 0.05).unwrap();
        prop_assert!(same.probes.iter().all(|p| p.delta == 0.0 && p.class == DeltaClass::Stable));
    }

    #[test]
    fn sparsity_penalty_is_scaled_mean(scores in prop::collection::vec(0.0..=1.0f64, 1..20), lambda in 0.0..5.0f64) {
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        prop_assert!((sparsity_penalty(&scores, lambda).unwrap() - lambda * mean).abs() <= 1e-12);
    }
}

#[test]
fn cold_soft_mask_forward_is_bernoulli() {
    let mut rng = Rng::new(2024);
    let draws = 10_000;
    let mut ones = 0.0;
    for _ in 0..draws {
        let m = hard_mask(&[0.7], 0.01, &mut rng, MaskMode::TrainSoft).unwrap();
        assert!(m.forward[0] == 0.0 || m.forward[0] == 1.0);
        ones += m.forward[0];
    }
    let mean = ones / draws as f64;
    assert!((0.68..=0.72).contains(&mean), "mean forward value {mean}");
}
