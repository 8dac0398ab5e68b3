//! Gradient, piecewise-linearity, prox and tree-fidelity properties of the
//! network on random parameter draws.

use nsotree_core::cox::{cox_nll_batch, CoxBatch};
use nsotree_core::net::{soft_threshold, Activation, NsoTreeParams};
use nsotree_core::tree::{default_feature_names, extract_tree, linear_hazard_construction};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random parameters with nonzero biases so every unit can switch.
fn random_params(rng: &mut ChaCha8Rng, d: usize, depth: usize, hidden: usize) -> NsoTreeParams {
    let n = NsoTreeParams::num_params_for(d, depth, hidden);
    let theta = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    NsoTreeParams::from_flat(d, depth, hidden, theta).unwrap()
}

fn batch_loss(p: &NsoTreeParams, x: &[f64], times: &[f64], events: &[bool]) -> f64 {
    let s = p.scores(x, Activation::Softplus).unwrap();
    cox_nll_batch(&CoxBatch::new(&s, times, events).unwrap()).unwrap().loss
}

#[test]
fn cox_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = rng.gen_range(2..=5);
        let depth = rng.gen_range(1..=4);
        let hidden = rng.gen_range(1..=2);
        let n = rng.gen_range(3..=8);
        let p = random_params(&mut rng, d, depth, hidden);
        let x: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..5.0)).collect();
        let mut events: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.6)).collect();
        events[0] = true;

        let s = p.scores(&x, Activation::Softplus).unwrap();
        let cox = cox_nll_batch(&CoxBatch::new(&s, &times, &events).unwrap()).unwrap();
        let analytic = p.backward(&x, &cox.grad, Activation::Softplus).unwrap();
        let h = 1e-5;
        for k in 0..analytic.len() {
            let mut plus = p.clone();
            plus.theta_mut()[k] += h;
            let mut minus = p.clone();
            minus.theta_mut()[k] -= h;
            let numeric = (batch_loss(&plus, &x, &times, &events) - batch_loss(&minus, &x, &times, &events)) / (2.0 * h);
            // The floor keeps exactly-zero entries (the head bias: the loss is
            // shift invariant) from being judged on difference-quotient round-off.
            let rel = (analytic[k] - numeric).abs() / analytic[k].abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-5, "max relative error {worst:e}");
}

#[test]
fn relu_network_is_affine_inside_a_pattern_region() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut checked = 0;
    while checked < 200 {
        let p = random_params(&mut rng, 3, 4, 2);
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dir: Vec<f64> = (0..3).map(|_| rng.gen_range(-1e-4..1e-4)).collect();
        let at = |t: f64| -> Vec<f64> { x.iter().zip(&dir).map(|(a, b)| a + t * b).collect() };
        let traces: Vec<_> = (0..3).map(|k| p.forward(&at(k as f64), Activation::Relu).unwrap()).collect();
        if traces.iter().any(|t| t.pattern != traces[0].pattern) {
            continue;
        }
        let d1 = traces[1].score - traces[0].score;
        let d2 = traces[2].score - traces[1].score;
        assert!((d1 - d2).abs() < 1e-12, "{d1} vs {d2}");
        checked += 1;
    }
}

#[test]
fn routed_tree_reproduces_forward_on_1000_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let p = random_params(&mut rng, 10, 30, 1);
    let tree = extract_tree(&p, &default_feature_names(10)).unwrap();
    for _ in 0..1000 {
        let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let route = tree.route(&x).unwrap();
        let trace = p.forward(&x, Activation::Relu).unwrap();
        assert_eq!(route.pattern, trace.pattern);
        assert!((route.leaf_value - trace.score).abs() <= 1e-9);
    }
}

#[test]
fn linear_hazard_construction_is_exact() {
    let p = linear_hazard_construction();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..100 {
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let s = p.score(&x, Activation::Relu).unwrap();
        assert!((s - (x[0] + 2.0 * x[1])).abs() <= 1e-9);
    }
}

#[test]
fn softplus_stays_finite_and_close_to_relu() {
    for k in -2000..=2000 {
        let z = k as f64 * 5.0;
        let sp = Activation::Softplus.apply(z);
        assert!(sp.is_finite());
        let gap = sp - Activation::Relu.apply(z);
        assert!((0.0..=std::f64::consts::LN_2 + 1e-15).contains(&gap));
    }
}

proptest! {
    #[test]
    fn prox_sparsity_is_monotone_in_lambda(seed in 0u64..1000, l1 in 0.0f64..0.5, extra in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_params(&mut rng, 4, 3, 2);
        let l2 = l1 + extra;
        let a = p.prox_step(l1).unwrap();
        let b = p.prox_step(l2).unwrap();
        prop_assert!(b.sparsity() >= a.sparsity());
        prop_assert_eq!(p.prox_step(0.0).unwrap(), p.clone());
    }

    #[test]
    fn prox_shrinks_every_survivor_by_lambda(seed in 0u64..1000, lambda in 0.0f64..0.8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_params(&mut rng, 3, 2, 2);
        let q = p.prox_step(lambda).unwrap();
        for l in 0..p.depth() {
            for (&w, &v) in p.layer_weights(l).iter().zip(q.layer_weights(l)) {
                prop_assert_eq!(v, soft_threshold(w, lambda));
                if v != 0.0 {
                    prop_assert!((w.abs() - v.abs() - lambda).abs() < 1e-12);
                }
            }
            prop_assert_eq!(p.layer_bias(l), q.layer_bias(l));
        }
        prop_assert_eq!(p.head_weights(), q.head_weights());
    }
}
