//! Finite-difference checks of every tape operation and of both gated
//! architectures.

use xai_core::diffcore::{BinaryKind, UnaryKind, Var};
use xai_core::interpretcc::{FeatureGatingConfig, FeatureGatingModel, FeatureGroupSpec, InterpretCCConfig, InterpretCCModel};
use xai_core::model::{Classifier, ForwardCtx, GateForward};
use xai_core::{Rng, Tape, Tensor};

const H: f64 = 1e-6;
const TOL: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Values drawn from N(0, 1) but kept at least `gap` away from zero.
fn away_from_zero(rng: &mut Rng, n: usize, gap: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v = rng.normal();
            v.signum() * (gap + v.abs())
        })
        .collect()
}

type Build = dyn Fn(&mut Tape, &[Var]) -> Var;

/// Reduces `build(inputs)` to a scalar with fixed random weights and compares
/// the tape gradient of every input element with a central difference.
fn check_op(name: &str, inputs: &[Tensor], build: &Build, seed: u64) -> f64 {
    let out_shape = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let y = build(&mut tape, &vars);
        tape.shape(y).to_vec()
    };
    let mut wrng = Rng::new(seed ^ 0x5eed);
    let weights = Tensor::new(out_shape.clone(), (0..out_shape.iter().product()).map(|_| wrng.normal()).collect())
        .unwrap();
    let eval = |vals: &[Tensor], grad: bool| -> (f64, Vec<Vec<f64>>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals
            .iter()
            .map(|t| if grad { tape.leaf(t.clone().requiring_grad()) } else { tape.constant(t.clone()) })
            .collect();
        let y = build(&mut tape, &vars);
        let w = tape.constant(weights.clone());
        let prod = tape.mul(y, w).unwrap();
        let s = tape.sum(prod).unwrap();
        let value = tape.value(s).item().unwrap();
        if !grad {
            return (value, vec![]);
        }
        tape.backward(s).unwrap();
        let grads = vars
            .iter()
            .zip(vals)
            .map(|(&v, t)| tape.grad(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
            .collect();
        (value, grads)
    };
    let (_, analytic) = eval(inputs, true);
    let mut worst: f64 = 0.0;
    for (i, t) in inputs.iter().enumerate() {
        for k in 0..t.len() {
            let mut plus = inputs.to_vec();
            plus[i].values_mut()[k] += H;
            let mut minus = inputs.to_vec();
            minus[i].values_mut()[k] -= H;
            let numeric = (eval(&plus, false).0 - eval(&minus, false).0) / (2.0 * H);
            let err = rel_err(analytic[i][k], numeric);
            assert!(
                err <= TOL,
                "{name} seed {seed}: input {i}[{k}] analytic {} numeric {numeric} rel {err:e}",
                analytic[i][k]
            );
            worst = worst.max(err);
        }
    }
    worst
}

fn tensor(shape: &[usize], values: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), values).unwrap()
}

fn normal(rng: &mut Rng, shape: &[usize]) -> Tensor {
    tensor(shape, (0..shape.iter().product()).map(|_| rng.normal()).collect())
}

fn positive(rng: &mut Rng, shape: &[usize]) -> Tensor {
    tensor(shape, (0..shape.iter().product()).map(|_| 0.5 + rng.uniform() * 2.0).collect())
}

#[test]
fn unary_ops() {
    for seed in 0..100 {
        let mut rng = Rng::new(seed);
        let x = tensor(&[3, 4], away_from_zero(&mut rng, 12, 0.05));
        let p = positive(&mut rng, &[3, 4]);
        for kind in [UnaryKind::Relu, UnaryKind::Sigmoid, UnaryKind::Tanh, UnaryKind::Exp, UnaryKind::Neg] {
            check_op(&format!("{kind:?}"), &[x.clone()], &move |t, v| t.unary(kind, v[0]).unwrap(), seed);
        }
        check_op("log", &[p], &|t, v| t.log(v[0]).unwrap(), seed);
    }
}

#[test]
fn binary_ops_with_broadcasting() {
    for seed in 0..100 {
        let mut rng = Rng::new(seed);
        let shapes: [(&[usize], &[usize]); 4] = [(&[3, 4], &[3, 4]), (&[3, 4], &[4]), (&[3, 4], &[3, 1]), (&[1, 4], &[3, 1])];
        for (sa, sb) in shapes {
            let a = normal(&mut rng, sa);
            let b = normal(&mut rng, sb);
            let denom = positive(&mut rng, sb);
            for kind in [BinaryKind::Add, BinaryKind::Sub, BinaryKind::Mul] {
                check_op(
                    &format!("{kind:?} {sa:?} {sb:?}"),
                    &[a.clone(), b.clone()],
                    &move |t, v| t.binary(kind, v[0], v[1]).unwrap(),
                    seed,
                );
            }
            check_op("div", &[a.clone(), denom], &|t, v| t.div(v[0], v[1]).unwrap(), seed);
        }
    }
}

#[test]
fn matrix_and_reduction_ops() {
    for seed in 0..100 {
        let mut rng = Rng::new(seed);
        let a = normal(&mut rng, &[3, 5]);
        let b = normal(&mut rng, &[5, 2]);
        let c = rng.normal();
        check_op("matmul", &[a.clone(), b], &|t, v| t.matmul(v[0], v[1]).unwrap(), seed);
        check_op("scale", &[a.clone()], &move |t, v| t.scale(v[0], c).unwrap(), seed);
        for axis in [0, 1] {
            check_op("softmax", &[a.clone()], &move |t, v| t.softmax(v[0], axis).unwrap(), seed);
            check_op("log_softmax", &[a.clone()], &move |t, v| t.log_softmax(v[0], axis).unwrap(), seed);
            check_op("sum_axis", &[a.clone()], &move |t, v| t.sum_axis(v[0], axis).unwrap(), seed);
        }
        check_op("sum", &[a.clone()], &|t, v| t.sum(v[0]).unwrap(), seed);
        check_op("mean", &[a.clone()], &|t, v| t.mean(v[0]).unwrap(), seed);
        check_op("select_columns", &[a.clone()], &|t, v| t.select_columns(v[0], &[4, 0, 4]).unwrap(), seed);
    }
}

#[test]
fn loss_ops() {
    for seed in 0..100 {
        let mut rng = Rng::new(seed);
        let logits = normal(&mut rng, &[4, 3]);
        let targets: Vec<usize> = (0..4).map(|_| rng.below(3)).collect();
        let pred = normal(&mut rng, &[4, 2]);
        let target = normal(&mut rng, &[4, 2]);
        check_op("cross_entropy", &[logits], &move |t, v| t.cross_entropy(v[0], &targets).unwrap(), seed);
        check_op("mse", &[pred, target], &|t, v| t.mse(v[0], v[1]).unwrap(), seed);
    }
}

#[test]
fn straight_through_passes_gradient_unchanged() {
    for seed in 0..100 {
        let mut rng = Rng::new(seed);
        let soft = normal(&mut rng, &[2, 3]);
        let hard = tensor(&[2, 3], soft.values().iter().map(|v| f64::from(u8::from(*v > 0.0))).collect());
        let upstream = normal(&mut rng, &[2, 3]);
        let mut tape = Tape::new();
        let s = tape.leaf(soft.clone().requiring_grad());
        let st = tape.straight_through(s, hard.clone()).unwrap();
        assert_eq!(tape.value(st).values(), hard.values());
        let w = tape.constant(upstream.clone());
        let prod = tape.mul(st, w).unwrap();
        let total = tape.sum(prod).unwrap();
        tape.backward(total).unwrap();
        assert_eq!(tape.grad(s).unwrap(), upstream.values());
    }
}

/// Loss of a model on a fixed batch; gate noise is reseeded on every call.
fn model_loss<M: Classifier>(model: &M, x: &Tensor, labels: &[usize], ctx: &ForwardCtx, seed: u64, grad: bool) -> f64 {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let out = model.forward_batch(&mut tape, xv, ctx, &mut Rng::new(seed)).unwrap();
    let task = tape.cross_entropy(out.logits, labels).unwrap();
    let total = match out.penalty {
        Some(p) => tape.add(task, p).unwrap(),
        None => task,
    };
    let v = tape.value(total).item().unwrap();
    if grad {
        tape.backward(total).unwrap();
        let mut store = model.store().clone();
        store.zero_grads();
        tape.drain_param_grads(&mut store).unwrap();
        GRADS.with(|g| {
            *g.borrow_mut() = store.iter().map(|(_, _, t)| t.grad().map(<[f64]>::to_vec)).collect();
        });
    }
    v
}

thread_local! {
    static GRADS: std::cell::RefCell<Vec<Option<Vec<f64>>>> = const { std::cell::RefCell::new(Vec::new()) };
}

/// Compares every trainable parameter's gradient with a central difference.
fn check_model<M: Classifier + Clone>(name: &str, model: &M, x: &Tensor, labels: &[usize], ctx: &ForwardCtx, seed: u64) -> f64 {
    model_loss(model, x, labels, ctx, seed, true);
    let grads = GRADS.with(|g| g.borrow().clone());
    let mut probe = model.clone();
    let ids: Vec<_> = model.store().iter().map(|(id, _, t)| (id, t.requires_grad(), t.len())).collect();
    let mut worst: f64 = 0.0;
    for (p, (id, trainable, len)) in ids.into_iter().enumerate() {
        if !trainable {
            continue;
        }
        let analytic = grads[p].clone().unwrap_or_else(|| vec![0.0; len]);
        for k in 0..len {
            let orig = probe.store().get(id).values()[k];
            probe.store_mut().get_mut(id).values_mut()[k] = orig + H;
            let up = model_loss(&probe, x, labels, ctx, seed, false);
            probe.store_mut().get_mut(id).values_mut()[k] = orig - H;
            let down = model_loss(&probe, x, labels, ctx, seed, false);
            probe.store_mut().get_mut(id).values_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * H);
            let err = rel_err(analytic[k], numeric);
            assert!(
                err <= TOL,
                "{name} seed {seed} {:?}: {}[{k}] analytic {} numeric {numeric} rel {err:e}",
                ctx.gate,
                model.store().name(id),
                analytic[k]
            );
            worst = worst.max(err);
        }
    }
    worst
}

/// Moves every trainable parameter to a random point so that no gate score
/// sits exactly on the 0.5 threshold (zero biases and dead ReLUs put it there).
fn randomize<M: Classifier>(model: &mut M, rng: &mut Rng) {
    let ids: Vec<_> = model.store().iter().filter(|(_, _, t)| t.requires_grad()).map(|(id, _, _)| id).collect();
    for id in ids {
        model.store_mut().get_mut(id).values_mut().iter_mut().for_each(|v| *v = 0.7 * rng.normal());
    }
}

fn batch(rng: &mut Rng, rows: usize, d: usize) -> (Tensor, Vec<usize>) {
    (normal(rng, &[rows, d]), (0..rows).map(|_| rng.below(2)).collect())
}

fn contexts() -> [ForwardCtx; 2] {
    [
        ForwardCtx {
            gate: GateForward::Relaxed,
            temperature: 0.7,
            sparsity: 0.1,
        },
        ForwardCtx {
            gate: GateForward::Hard,
            temperature: 1.0,
            sparsity: 0.1,
        },
    ]
}

#[test]
fn interpretcc_moe_gradients() {
    for seed in 0..100 {
        let mut rng = Rng::new(seed);
        let mut cfg = InterpretCCConfig::new(FeatureGroupSpec::contiguous(5, 2).unwrap(), 2);
        cfg.discriminator_hidden = vec![4];
        cfg.expert_hidden = vec![3];
        let mut model = InterpretCCModel::new(cfg, &mut rng).unwrap();
        randomize(&mut model, &mut rng);
        let (x, y) = batch(&mut rng, 3, 5);
        for ctx in contexts() {
            check_model("interpretcc", &model, &x, &y, &ctx, seed);
        }
    }
}

#[test]
fn feature_gating_gradients() {
    for seed in 0..100 {
        let mut rng = Rng::new(seed);
        let names = (0..4).map(|i| format!("f{i}")).collect();
        let mut cfg = FeatureGatingConfig::new(names, 2);
        cfg.gate_hidden = vec![4];
        cfg.predictor_hidden = vec![4];
        let mut model = FeatureGatingModel::new(cfg, &mut rng).unwrap();
        randomize(&mut model, &mut rng);
        let (x, y) = batch(&mut rng, 3, 4);
        for ctx in contexts() {
            check_model("feature_gating", &model, &x, &y, &ctx, seed);
        }
    }
}

#[test]
fn inactive_experts_receive_exactly_zero_gradient() {
    let mut isolated = 0;
    for seed in 0..100 {
        let mut rng = Rng::new(seed);
        let mut cfg = InterpretCCConfig::new(FeatureGroupSpec::contiguous(6, 3).unwrap(), 2);
        cfg.discriminator_hidden = vec![4];
        cfg.expert_hidden = vec![3];
        let model = InterpretCCModel::new(cfg, &mut rng).unwrap();
        let (x, y) = batch(&mut rng, 1, 6);
        let decision = xai_core::interpretcc::Interpretable::route(&model, x.values()).unwrap();
        model_loss(&model, &x, &y, &contexts()[1], seed, true);
        let grads = GRADS.with(|g| g.borrow().clone());
        for (p, (_, name, _)) in model.store().iter().enumerate() {
            let Some(g) = name.strip_prefix("expert").and_then(|r| r.split('.').next()).and_then(|s| s.parse::<usize>().ok())
            else {
                continue;
            };
            if !decision.active[g] {
                isolated += 1;
                if let Some(grad) = &grads[p] {
                    assert!(grad.iter().all(|&v| v == 0.0), "seed {seed}: {name} got {grad:?}");
                }
            }
        }
    }
    assert!(isolated > 0, "no inactive expert was ever exercised");
}
