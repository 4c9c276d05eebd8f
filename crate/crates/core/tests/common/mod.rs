#![allow(dead_code)]

use marginsphere::data::Label;
use marginsphere::numcore::{Activation, Layer, Matrix, Network};
use marginsphere::sphere::{ExplicitSphere, LossSpec, Multipliers, NuParams};
use rand::Rng;

pub fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// A small network with random weights and biases in every slot.
pub fn random_net<R: Rng>(rng: &mut R, input: usize, widths: &[usize]) -> Network {
    let mut layers = Vec::new();
    let mut fan_in = input;
    for (i, &w) in widths.iter().enumerate() {
        let act = if i + 1 == widths.len() {
            Activation::Identity
        } else if rng.random_bool(0.5) {
            Activation::LeakyRelu
        } else {
            Activation::Relu
        };
        let weight = uniform_matrix(rng, w, fan_in, 1.0);
        let bias = (0..w).map(|_| rng.random_range(-0.5..0.5)).collect();
        layers.push(Layer::new(weight, bias, act).unwrap());
        fan_in = w;
    }
    let final_w = (0..fan_in).map(|_| rng.random_range(-2.0..2.0)).collect();
    Network::new(
        layers,
        final_w,
        rng.random_range(-2.0..2.0),
        rng.random_range(0.1..3.0),
    )
    .unwrap()
}

fn act(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Identity => z,
        Activation::Relu => {
            if z > 0.0 {
                z
            } else {
                0.0
            }
        }
        Activation::LeakyRelu => {
            if z > 0.0 {
                z
            } else {
                0.01 * z
            }
        }
    }
}

/// Independent forward pass: returns `φ`, `g` and every hidden
/// pre-activation that feeds a nonlinearity.
pub fn oracle_forward(net: &Network, x: &[f64]) -> (Vec<f64>, f64, Vec<f64>) {
    let mut h = x.to_vec();
    let mut kinks = Vec::new();
    for layer in net.layers() {
        let w = layer.weight();
        let mut next = Vec::with_capacity(w.rows());
        for r in 0..w.rows() {
            let mut z = layer.bias()[r];
            for c in 0..w.cols() {
                z += w.get(r, c) * h[c];
            }
            if layer.activation() != Activation::Identity {
                kinks.push(z);
            }
            next.push(act(layer.activation(), z));
        }
        h = next;
    }
    let g = h.iter().zip(net.final_w()).map(|(a, b)| a * b).sum::<f64>() + net.final_b();
    (h, g, kinks)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Hand-written loss value straight from the objective definitions, plus the
/// hinge arguments and nonlinearity inputs that decide differentiability.
pub fn oracle_loss(
    net: &Network,
    x: &Matrix,
    labels: &[Label],
    spec: &LossSpec,
) -> (f64, Vec<f64>) {
    let mut kinks = Vec::new();
    let mut rows = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        let (phi, g, k) = oracle_forward(net, x.row(i));
        kinks.extend(k);
        rows.push((phi, g, *l));
    }
    let decay_sum: f64 = net
        .layers()
        .iter()
        .map(|l| l.weight().data().iter().map(|v| v * v).sum::<f64>())
        .sum();
    let m = rows.iter().filter(|r| r.2 == Label::Normal).count() as f64;
    let n_minus = rows.len() as f64 - m;
    let hinge = |z: f64, kinks: &mut Vec<f64>| {
        kinks.push(z);
        z.max(0.0)
    };
    let value = match spec {
        LossSpec::Imdad { nu, multipliers } => {
            let mut v = 1.0 - net.final_b() - nu.nu * net.rho_bar();
            for (phi, g, l) in &rows {
                let q: f64 = phi.iter().map(|a| a * a).sum();
                match l {
                    Label::Normal => v += hinge(q + g, &mut kinks) / (nu.nu1 * m),
                    Label::Abnormal => {
                        v += hinge(net.rho_bar() - q - g, &mut kinks) / (nu.nu2 * n_minus)
                    }
                }
            }
            let w2: f64 = net.final_w().iter().map(|a| a * a).sum();
            v + 0.5 * nu.lambda * decay_sum
                + multipliers.alpha * (w2 - 4.0)
                + multipliers.beta * (net.final_b() - 1.0)
                - multipliers.gamma * net.rho_bar()
        }
        LossSpec::MarginSphere { sphere, nu } => {
            let mut v = sphere.r_bar - nu.nu * sphere.rho_bar;
            for (phi, _, l) in &rows {
                let d = sq_dist(phi, &sphere.center);
                match l {
                    Label::Normal => v += hinge(d - sphere.r_bar, &mut kinks) / (nu.nu1 * m),
                    Label::Abnormal => {
                        v += hinge(sphere.r_bar + sphere.rho_bar - d, &mut kinks)
                            / (nu.nu2 * n_minus)
                    }
                }
            }
            v + 0.5 * nu.lambda * decay_sum
        }
        LossSpec::DeepSvdd {
            center,
            r_sq,
            nu,
            lambda,
            anomaly_nu2,
        } => {
            let mut v = *r_sq;
            for (phi, _, l) in &rows {
                let d = sq_dist(phi, center);
                match l {
                    Label::Normal => v += hinge(d - r_sq, &mut kinks) / (nu * m),
                    Label::Abnormal => {
                        v += hinge(r_sq - d, &mut kinks) / (anomaly_nu2.unwrap() * n_minus)
                    }
                }
            }
            v + 0.5 * lambda * decay_sum
        }
    };
    (value, kinks)
}

pub fn random_labels<R: Rng>(rng: &mut R, n: usize, allow_abnormal: bool) -> Vec<Label> {
    let mut labels: Vec<Label> = (0..n)
        .map(|_| {
            if allow_abnormal && rng.random_bool(0.4) {
                Label::Abnormal
            } else {
                Label::Normal
            }
        })
        .collect();
    labels[0] = Label::Normal;
    labels
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Imdad,
    MarginSphere,
    DeepSvdd,
    DeepSvddWithAnomalies,
}

pub const LOSS_KINDS: [LossKind; 4] = [
    LossKind::Imdad,
    LossKind::MarginSphere,
    LossKind::DeepSvdd,
    LossKind::DeepSvddWithAnomalies,
];

pub struct Trial {
    pub net: Network,
    pub x: Matrix,
    pub labels: Vec<Label>,
    pub spec: LossSpec,
}

/// A random (network, batch, loss) triple with every nonlinearity and hinge at
/// least `margin` away from its kink, so central differences are valid.
pub fn random_trial<R: Rng>(rng: &mut R, kind: LossKind, margin: f64) -> Trial {
    loop {
        let d = rng.random_range(1..=6);
        let depth = rng.random_range(1..=3);
        let widths: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=8)).collect();
        let net = random_net(rng, d, &widths);
        let p = net.rep_dim();
        let n = rng.random_range(1..=8);
        let x = uniform_matrix(rng, n, d, 1.5);
        let nu = NuParams {
            nu: rng.random_range(0.05..1.0),
            nu1: rng.random_range(0.1..1.0),
            nu2: rng.random_range(0.1..1.0),
            lambda: rng.random_range(0.0..0.1),
        };
        let spec = match kind {
            LossKind::Imdad => LossSpec::Imdad {
                nu,
                multipliers: Multipliers {
                    alpha: rng.random_range(-1.0..1.0),
                    beta: rng.random_range(0.0..1.0),
                    gamma: rng.random_range(0.0..1.0),
                },
            },
            LossKind::MarginSphere => LossSpec::MarginSphere {
                sphere: ExplicitSphere {
                    center: (0..p).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    r_bar: rng.random_range(0.1..4.0),
                    rho_bar: rng.random_range(0.1..4.0),
                },
                nu,
            },
            LossKind::DeepSvdd | LossKind::DeepSvddWithAnomalies => LossSpec::DeepSvdd {
                center: (0..p).map(|_| rng.random_range(-1.0..1.0)).collect(),
                r_sq: rng.random_range(0.0..4.0),
                nu: nu.nu,
                lambda: nu.lambda,
                anomaly_nu2: (kind == LossKind::DeepSvddWithAnomalies).then_some(nu.nu2),
            },
        };
        let labels = random_labels(rng, n, kind != LossKind::DeepSvdd);
        let (_, kinks) = oracle_loss(&net, &x, &labels, &spec);
        if kinks.iter().all(|z| z.abs() > margin) {
            return Trial {
                net,
                x,
                labels,
                spec,
            };
        }
    }
}

fn nudge(net: &mut Network, k: usize, delta: f64) {
    let mut k = k;
    for s in net.param_slices_mut() {
        if k < s.len() {
            s[k] += delta;
            return;
        }
        k -= s.len();
    }
    panic!("parameter index out of range");
}

/// Worst mismatch between the analytic gradient and central differences, as
/// `(abs error, rel error)` of the coordinate that fails the combined test
/// most badly.
pub fn gradient_mismatch(t: &Trial, h: f64) -> Option<(usize, f64, f64, f64, f64)> {
    let (_, grads) = t.net.loss_and_gradients(&t.x, &t.labels, &t.spec).unwrap();
    let analytic: Vec<f64> = grads.slices().concat();
    assert_eq!(analytic.len(), t.net.param_count());
    for (k, &a) in analytic.iter().enumerate() {
        let mut plus = t.net.clone();
        nudge(&mut plus, k, h);
        let mut minus = t.net.clone();
        nudge(&mut minus, k, -h);
        let fp = t.spec.value(&plus, &t.x, &t.labels).unwrap();
        let fm = t.spec.value(&minus, &t.x, &t.labels).unwrap();
        let num = (fp - fm) / (2.0 * h);
        let abs = (a - num).abs();
        let rel = abs / a.abs().max(num.abs());
        if abs > 1e-8 && rel > 1e-5 {
            return Some((k, a, num, abs, rel));
        }
    }
    None
}

/// Whether the trial has at least one active and at least one inactive hinge.
pub fn hinge_regimes(t: &Trial) -> (bool, bool) {
    let (_, kinks) = oracle_loss(&t.net, &t.x, &t.labels, &t.spec);
    let n_act: usize = t
        .net
        .layers()
        .iter()
        .filter(|l| l.activation() != Activation::Identity)
        .map(|l| l.out_dim())
        .sum::<usize>()
        * t.x.rows();
    let hinges = &kinks[n_act..];
    (
        hinges.iter().any(|z| *z > 0.0),
        hinges.iter().any(|z| *z < 0.0),
    )
}

/// Pair counting straight from the definition, in exact rational arithmetic:
/// returns `(2·wins + ties, 2·pairs)`.
pub fn brute_force_auc(scores: &[f64], labels: &[Label]) -> (u64, u64) {
    let mut num = 0;
    let mut den = 0;
    for (sa, la) in scores.iter().zip(labels) {
        if !la.is_abnormal() {
            continue;
        }
        for (sn, ln) in scores.iter().zip(labels) {
            if ln.is_abnormal() {
                continue;
            }
            den += 2;
            if sa > sn {
                num += 2;
            } else if sa == sn {
                num += 1;
            }
        }
    }
    (num, den)
}
