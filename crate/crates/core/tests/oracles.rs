mod common;

use common::{
    brute_force_auc, oracle_forward, oracle_loss, random_net, random_trial, uniform_matrix,
    LOSS_KINDS,
};
use marginsphere::data::Label;
use marginsphere::eval::{auc, quantile};
use marginsphere::numcore::{AdamState, Gradients, BETA1, BETA2, EPSILON};
use marginsphere::sphere::{decision_radius, equivalence_residual, imdad_score, view_hypersphere};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn auc_equals_pair_counting(
        rows in prop::collection::vec((0u8..12, any::<bool>()), 2..50)
    ) {
        // small integer-valued scores force plenty of ties
        let scores: Vec<f64> = rows.iter().map(|(s, _)| *s as f64 / 4.0).collect();
        let labels: Vec<Label> = rows
            .iter()
            .map(|(_, a)| if *a { Label::Abnormal } else { Label::Normal })
            .collect();
        let (num, den) = brute_force_auc(&scores, &labels);
        match auc(&scores, &labels) {
            Ok(v) => prop_assert_eq!(v, num as f64 / den as f64),
            Err(_) => prop_assert_eq!(den, 0),
        }
    }

    #[test]
    fn forward_matches_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(1..=6);
        let widths: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(1..=8)).collect();
        let net = random_net(&mut rng, d, &widths);
        let x = uniform_matrix(&mut rng, 5, d, 2.0);
        let batch = net.forward_batch(&x).unwrap();
        for i in 0..5 {
            let (phi, g, _) = oracle_forward(&net, x.row(i));
            for (a, b) in phi.iter().zip(batch.phi.row(i)) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
            prop_assert!((g - batch.g[i]).abs() <= 1e-12 * (1.0 + g.abs()));
        }
    }

    #[test]
    fn loss_values_match_definitions(seed in any::<u64>(), kind in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_trial(&mut rng, LOSS_KINDS[kind], 0.0);
        let (expected, _) = oracle_loss(&t.net, &t.x, &t.labels, &t.spec);
        let got = t.spec.value(&t.net, &t.x, &t.labels).unwrap();
        prop_assert!((got - expected).abs() <= 1e-10 * (1.0 + expected.abs()), "{} vs {}", got, expected);
    }

    #[test]
    fn quantile_matches_sorted_interpolation(
        v in prop::collection::vec(-100.0f64..100.0, 1..40),
        q in 0.0f64..=1.0
    ) {
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        let h = (s.len() - 1) as f64 * q;
        let lo = h.floor() as usize;
        let expected = if lo + 1 < s.len() { s[lo] + (h - lo as f64) * (s[lo + 1] - s[lo]) } else { s[lo] };
        let got = quantile(&v, q).unwrap();
        prop_assert!((got - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
    }
}

#[test]
fn adam_matches_scalar_recurrence() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut net = random_net(&mut rng, 3, &[4, 2]);
    let flat = |net: &marginsphere::numcore::Network| -> Vec<f64> {
        net.clone()
            .param_slices_mut()
            .iter()
            .flat_map(|s| s.to_vec())
            .collect()
    };
    let mut theta = flat(&net);
    let n = theta.len();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut state = AdamState::new(&net);
    let lr = 1e-2;
    for t in 1..=100 {
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut grads = Gradients::zeros_like(&net);
        let mut off = 0;
        for s in grads.slices_mut() {
            let len = s.len();
            s.copy_from_slice(&g[off..off + len]);
            off += len;
        }
        state.step(&mut net, &grads, lr).unwrap();
        for i in 0..n {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
            let mh = m[i] / (1.0 - BETA1.powi(t));
            let vh = v[i] / (1.0 - BETA2.powi(t));
            theta[i] -= lr * mh / (vh.sqrt() + EPSILON);
        }
        let got = flat(&net);
        for i in 0..n {
            assert!((got[i] - theta[i]).abs() <= 1e-12, "step {t} param {i}");
        }
    }
    assert_eq!(state.step_count(), 100);
}

#[test]
fn equivalence_holds_on_random_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let d = rng.random_range(1..=10);
        let widths: Vec<usize> = (0..rng.random_range(1..=3))
            .map(|_| rng.random_range(1..=16))
            .collect();
        let mut net = random_net(&mut rng, d, &widths);
        let w = net.final_w().to_vec();
        let s = 2.0 / w.iter().map(|v| v * v).sum::<f64>().sqrt();
        net.set_final_w(w.iter().map(|v| v * s).collect()).unwrap();
        for _ in 0..10 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            assert!(equivalence_residual(&net, &x).unwrap() <= 1e-9);
        }
    }
}

#[test]
fn score_matches_decision_radius() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let mut net = random_net(&mut rng, 3, &[5, 3]);
        net.set_rho_bar(rng.random_range(-0.5..3.0));
        let view = view_hypersphere(&net);
        let r = net.rho_bar().max(0.0);
        let raw = 1.0 - net.final_b();
        let rb = raw.max(0.0);
        // only the square roots see clamped values
        let t = raw + ((rb + r).sqrt() - rb.sqrt()) / 2.0;
        assert!((view.t - t).abs() <= 1e-12);
        assert!((decision_radius(1.0 - net.final_b(), net.rho_bar()) - t).abs() <= 1e-12);
        let x = [0.3, -0.7, 1.1];
        let (phi, _, _) = oracle_forward(&net, &x);
        let d: f64 = phi
            .iter()
            .zip(&view.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum();
        assert!((imdad_score(&net, &x).unwrap() - (d - t * t)).abs() <= 1e-10);
    }
}
