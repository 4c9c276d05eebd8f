//! Loss registry.
//!
//! Every training objective is a [`LossSpec`]. A spec evaluates its value on
//! the network outputs `(φ, g)` of a batch together with the gradient of that
//! value with respect to `φ`, `g` and the head parameters `(w, b, ρ̄)`; the
//! network's backward pass chains the rest.
//!
//! Hinges are normalized by the within-batch class counts. `max{0, z}` has
//! subgradient 0 at `z ≤ 0`.

use serde::{Deserialize, Serialize};

use super::params::{Multipliers, NuParams};
use crate::data::Label;
use crate::error::{Error, Result};
use crate::numcore::{dist_sq, norm_sq, Matrix, Network};

/// Sphere parameters held outside the network (MD-AD and the heuristic
/// baselines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitSphere {
    pub center: Vec<f64>,
    pub r_bar: f64,
    pub rho_bar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec {
    /// Lagrangian of the end-to-end objective: the sphere is the final layer.
    Imdad {
        nu: NuParams,
        multipliers: Multipliers,
    },
    /// Max-margin objective over an explicit sphere; only the hidden layers
    /// receive gradient.
    MarginSphere {
        sphere: ExplicitSphere,
        nu: NuParams,
    },
    /// Soft-boundary Deep SVDD over a fixed center and squared radius. With
    /// `anomaly_nu2` set, abnormal rows inside the sphere are penalized too
    /// (the D-AD ablation).
    DeepSvdd {
        center: Vec<f64>,
        r_sq: f64,
        nu: f64,
        lambda: f64,
        anomaly_nu2: Option<f64>,
    },
}

/// Head-side result of evaluating a loss on a batch.
#[derive(Debug, Clone)]
pub(crate) struct HeadGrad {
    pub value: f64,
    /// Explicit `∂L/∂φᵢ` (the path through `g` is carried by `d_g`).
    pub d_phi: Matrix,
    pub d_g: Vec<f64>,
    pub d_final_w: Vec<f64>,
    pub d_final_b: f64,
    pub d_rho_bar: f64,
    /// Weight-decay coefficient applied to every hidden weight matrix.
    pub decay: f64,
}

struct Split {
    normal: Vec<usize>,
    abnormal: Vec<usize>,
}

fn split_labels(labels: &[Label]) -> Split {
    let mut normal = Vec::new();
    let mut abnormal = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match l {
            Label::Normal => normal.push(i),
            Label::Abnormal => abnormal.push(i),
        }
    }
    Split { normal, abnormal }
}

fn check_terms(terms: &[(&str, f64)]) -> Result<f64> {
    for (name, v) in terms {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("loss term '{name}' = {v}")));
        }
    }
    Ok(terms.iter().map(|(_, v)| v).sum())
}

impl LossSpec {
    /// Loss value on a batch.
    pub fn value(&self, net: &Network, x: &Matrix, labels: &[Label]) -> Result<f64> {
        if labels.len() != x.rows() {
            return Err(Error::Shape(format!(
                "{} labels for {} rows",
                labels.len(),
                x.rows()
            )));
        }
        let out = net.forward_batch(x)?;
        Ok(self
            .evaluate_with_grad(net, &out.phi, &out.g, labels)?
            .value)
    }

    pub(crate) fn evaluate_with_grad(
        &self,
        net: &Network,
        phi: &Matrix,
        g: &[f64],
        labels: &[Label],
    ) -> Result<HeadGrad> {
        let split = split_labels(labels);
        let n = labels.len();
        let p = phi.cols();
        let mut head = HeadGrad {
            value: 0.0,
            d_phi: Matrix::zeros(n, p),
            d_g: vec![0.0; n],
            d_final_w: vec![0.0; net.rep_dim()],
            d_final_b: 0.0,
            d_rho_bar: 0.0,
            decay: 0.0,
        };
        match self {
            LossSpec::Imdad { nu, multipliers } => {
                imdad(net, phi, g, &split, nu, multipliers, &mut head)?
            }
            LossSpec::MarginSphere { sphere, nu } => {
                margin_sphere(net, phi, &split, sphere, nu, &mut head)?
            }
            LossSpec::DeepSvdd {
                center,
                r_sq,
                nu,
                lambda,
                anomaly_nu2,
            } => deepsvdd(
                net,
                phi,
                &split,
                center,
                *r_sq,
                *nu,
                *lambda,
                *anomaly_nu2,
                &mut head,
            )?,
        }
        Ok(head)
    }
}

fn imdad(
    net: &Network,
    phi: &Matrix,
    g: &[f64],
    split: &Split,
    nu: &NuParams,
    mult: &Multipliers,
    head: &mut HeadGrad,
) -> Result<()> {
    if split.normal.is_empty() {
        return Err(Error::InvalidBatch("batch has no normal rows".into()));
    }
    let b = net.final_b();
    let rho = net.rho_bar();

    let scale_n = 1.0 / (nu.nu1 * split.normal.len() as f64);
    let mut normal_hinge = 0.0;
    for &i in &split.normal {
        let z = norm_sq(phi.row(i)) + g[i];
        if z > 0.0 {
            normal_hinge += z;
            head.d_g[i] += scale_n;
            for (d, v) in head.d_phi.row_mut(i).iter_mut().zip(phi.row(i)) {
                *d += 2.0 * scale_n * v;
            }
        }
    }
    normal_hinge *= scale_n;

    let mut abnormal_hinge = 0.0;
    if !split.abnormal.is_empty() {
        let scale_a = 1.0 / (nu.nu2 * split.abnormal.len() as f64);
        for &i in &split.abnormal {
            let z = rho - norm_sq(phi.row(i)) - g[i];
            if z > 0.0 {
                abnormal_hinge += z;
                head.d_g[i] -= scale_a;
                head.d_rho_bar += scale_a;
                for (d, v) in head.d_phi.row_mut(i).iter_mut().zip(phi.row(i)) {
                    *d -= 2.0 * scale_a * v;
                }
            }
        }
        abnormal_hinge *= scale_a;
    }

    let w_sq = net.w_norm_sq();
    let decay = 0.5 * nu.lambda * net.weight_decay_sum();
    let constraint = mult.alpha * (w_sq - 4.0) + mult.beta * (b - 1.0) - mult.gamma * rho;
    head.value = check_terms(&[
        ("1 - b - nu*rho_bar", 1.0 - b - nu.nu * rho),
        ("normal hinge", normal_hinge),
        ("abnormal hinge", abnormal_hinge),
        ("weight decay", decay),
        ("multiplier terms", constraint),
    ])?;

    head.d_final_b += -1.0 + mult.beta;
    head.d_rho_bar += -nu.nu - mult.gamma;
    for (d, w) in head.d_final_w.iter_mut().zip(net.final_w()) {
        *d += 2.0 * mult.alpha * w;
    }
    head.decay = nu.lambda;
    Ok(())
}

fn margin_sphere(
    net: &Network,
    phi: &Matrix,
    split: &Split,
    sphere: &ExplicitSphere,
    nu: &NuParams,
    head: &mut HeadGrad,
) -> Result<()> {
    if !(sphere.r_bar > 0.0) || !(sphere.rho_bar > 0.0) {
        return Err(Error::Domain(format!(
            "explicit sphere needs R̄ > 0 and ρ̄ > 0, got R̄ = {}, ρ̄ = {}",
            sphere.r_bar, sphere.rho_bar
        )));
    }
    if sphere.center.len() != phi.cols() {
        return Err(Error::Shape(format!(
            "center length {} vs representation dim {}",
            sphere.center.len(),
            phi.cols()
        )));
    }
    if split.normal.is_empty() {
        return Err(Error::InvalidBatch("batch has no normal rows".into()));
    }
    let c = &sphere.center;
    let scale_n = 1.0 / (nu.nu1 * split.normal.len() as f64);
    let mut normal_hinge = 0.0;
    for &i in &split.normal {
        let z = dist_sq(phi.row(i), c) - sphere.r_bar;
        if z > 0.0 {
            normal_hinge += z;
            let row = phi.row(i).to_vec();
            for ((d, v), ck) in head.d_phi.row_mut(i).iter_mut().zip(&row).zip(c) {
                *d += 2.0 * scale_n * (v - ck);
            }
        }
    }
    normal_hinge *= scale_n;

    let mut abnormal_hinge = 0.0;
    if !split.abnormal.is_empty() {
        let scale_a = 1.0 / (nu.nu2 * split.abnormal.len() as f64);
        for &i in &split.abnormal {
            let z = sphere.r_bar + sphere.rho_bar - dist_sq(phi.row(i), c);
            if z > 0.0 {
                abnormal_hinge += z;
                let row = phi.row(i).to_vec();
                for ((d, v), ck) in head.d_phi.row_mut(i).iter_mut().zip(&row).zip(c) {
                    *d -= 2.0 * scale_a * (v - ck);
                }
            }
        }
        abnormal_hinge *= scale_a;
    }

    let decay = 0.5 * nu.lambda * net.weight_decay_sum();
    head.value = check_terms(&[
        ("R_bar - nu*rho_bar", sphere.r_bar - nu.nu * sphere.rho_bar),
        ("normal hinge", normal_hinge),
        ("abnormal hinge", abnormal_hinge),
        ("weight decay", decay),
    ])?;
    head.decay = nu.lambda;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn deepsvdd(
    net: &Network,
    phi: &Matrix,
    split: &Split,
    center: &[f64],
    r_sq: f64,
    nu: f64,
    lambda: f64,
    anomaly_nu2: Option<f64>,
    head: &mut HeadGrad,
) -> Result<()> {
    if center.len() != phi.cols() {
        return Err(Error::Shape(format!(
            "center length {} vs representation dim {}",
            center.len(),
            phi.cols()
        )));
    }
    if split.normal.is_empty() {
        return Err(Error::InvalidBatch("batch has no normal rows".into()));
    }
    if anomaly_nu2.is_none() && !split.abnormal.is_empty() {
        return Err(Error::InvalidBatch(
            "one-class objective received abnormal rows".into(),
        ));
    }
    if !(nu > 0.0) {
        return Err(Error::Domain(format!("nu must be > 0, got {nu}")));
    }
    let scale_n = 1.0 / (nu * split.normal.len() as f64);
    let mut normal_hinge = 0.0;
    for &i in &split.normal {
        let z = dist_sq(phi.row(i), center) - r_sq;
        if z > 0.0 {
            normal_hinge += z;
            let row = phi.row(i).to_vec();
            for ((d, v), ck) in head.d_phi.row_mut(i).iter_mut().zip(&row).zip(center) {
                *d += 2.0 * scale_n * (v - ck);
            }
        }
    }
    normal_hinge *= scale_n;

    let mut abnormal_hinge = 0.0;
    if let Some(nu2) = anomaly_nu2 {
        if !split.abnormal.is_empty() {
            let scale_a = 1.0 / (nu2 * split.abnormal.len() as f64);
            for &i in &split.abnormal {
                let z = r_sq - dist_sq(phi.row(i), center);
                if z > 0.0 {
                    abnormal_hinge += z;
                    let row = phi.row(i).to_vec();
                    for ((d, v), ck) in head.d_phi.row_mut(i).iter_mut().zip(&row).zip(center) {
                        *d -= 2.0 * scale_a * (v - ck);
                    }
                }
            }
            abnormal_hinge *= scale_a;
        }
    }

    let decay = 0.5 * lambda * net.weight_decay_sum();
    head.value = check_terms(&[
        ("R^2", r_sq),
        ("normal hinge", normal_hinge),
        ("abnormal hinge", abnormal_hinge),
        ("weight decay", decay),
    ])?;
    head.decay = lambda;
    Ok(())
}

/// End-to-end Lagrangian on a labelled batch.
pub fn imdad_loss(
    net: &Network,
    x: &Matrix,
    labels: &[Label],
    nu: &NuParams,
    multipliers: &Multipliers,
) -> Result<f64> {
    LossSpec::Imdad {
        nu: *nu,
        multipliers: *multipliers,
    }
    .value(net, x, labels)
}

/// Max-margin objective with the sphere supplied explicitly.
pub fn margin_sphere_loss(
    net: &Network,
    sphere: &ExplicitSphere,
    x: &Matrix,
    labels: &[Label],
    nu: &NuParams,
) -> Result<f64> {
    LossSpec::MarginSphere {
        sphere: sphere.clone(),
        nu: *nu,
    }
    .value(net, x, labels)
}

/// Soft-boundary Deep SVDD objective over normal rows.
pub fn deepsvdd_loss(
    net: &Network,
    x: &Matrix,
    center: &[f64],
    r_sq: f64,
    nu: f64,
    lambda: f64,
) -> Result<f64> {
    if x.rows() == 0 {
        return Err(Error::InvalidBatch("empty batch".into()));
    }
    let labels = vec![Label::Normal; x.rows()];
    LossSpec::DeepSvdd {
        center: center.to_vec(),
        r_sq,
        nu,
        lambda,
        anomaly_nu2: None,
    }
    .value(net, x, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Activation, Layer};
    use crate::sphere::view::view_hypersphere;

    /// Identity feature map of width `p` so that φ(x) = x.
    fn identity_net(w: Vec<f64>, b: f64, rho: f64) -> Network {
        let p = w.len();
        let mut eye = Matrix::zeros(p, p);
        for i in 0..p {
            eye.set(i, i, 1.0);
        }
        let layer = Layer::new(eye, vec![0.0; p], Activation::Identity).unwrap();
        Network::new(vec![layer], w, b, rho).unwrap()
    }

    fn nu(nu: f64, nu1: f64, nu2: f64, lambda: f64) -> NuParams {
        NuParams {
            nu,
            nu1,
            nu2,
            lambda,
        }
    }

    #[test]
    fn inactive_hinges_leave_base_term() {
        // center (-1, 0), R̄ = 1, ρ̄ = 0.5: normal at the center, abnormal far away
        let net = identity_net(vec![2.0, 0.0], 0.0, 0.5);
        let x = Matrix::from_rows(&[vec![-1.0, 0.0], vec![5.0, 5.0]]).unwrap();
        let labels = [Label::Normal, Label::Abnormal];
        let p = nu(0.3, 0.5, 0.5, 0.0);
        let l = imdad_loss(&net, &x, &labels, &p, &Multipliers::default()).unwrap();
        assert!((l - (1.0 - 0.0 - 0.3 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn zero_network_hand_value() {
        let layer = Layer::new(Matrix::zeros(2, 2), vec![0.0; 2], Activation::Relu).unwrap();
        let net = Network::new(vec![layer], vec![0.0, 0.0], 0.5, 0.0).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let p = nu(0.2, 0.5, 0.5, 0.0);
        let l = imdad_loss(&net, &x, &[Label::Normal], &p, &Multipliers::default()).unwrap();
        // 1 - 0.5 - 0.2·0 + 0.5/0.5
        assert!((l - 1.5).abs() < 1e-12);
    }

    #[test]
    fn multiplier_term_arithmetic() {
        // wᵀw = 8 with α = 2 adds 2·(8 − 4) = 8
        let w = vec![2.0, 2.0];
        let base_net = identity_net(w, 0.0, 0.0);
        let x = Matrix::from_rows(&[vec![-100.0, -100.0]]).unwrap();
        let p = nu(0.0, 1.0, 1.0, 0.0);
        let none = imdad_loss(&base_net, &x, &[Label::Normal], &p, &Multipliers::default());
        let with = imdad_loss(
            &base_net,
            &x,
            &[Label::Normal],
            &p,
            &Multipliers {
                alpha: 2.0,
                beta: 0.0,
                gamma: 0.0,
            },
        );
        assert!((with.unwrap() - none.unwrap() - 8.0).abs() < 1e-9);
    }

    #[test]
    fn requires_normal_rows() {
        let net = identity_net(vec![2.0], 0.0, 1.0);
        let x = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let err = imdad_loss(
            &net,
            &x,
            &[Label::Abnormal],
            &NuParams::default(),
            &Multipliers::default(),
        );
        assert!(matches!(err, Err(Error::InvalidBatch(_))));
        let sphere = ExplicitSphere {
            center: vec![0.0],
            r_bar: 1.0,
            rho_bar: 1.0,
        };
        assert!(
            margin_sphere_loss(&net, &sphere, &x, &[Label::Abnormal], &NuParams::default())
                .is_err()
        );
        assert!(deepsvdd_loss(&net, &Matrix::zeros(0, 1), &[0.0], 1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn margin_sphere_domain_and_values() {
        let net = identity_net(vec![2.0, 0.0], 0.0, 1.0);
        let p = nu(0.5, 1.0, 1.0, 0.0);
        let bad = ExplicitSphere {
            center: vec![0.0, 0.0],
            r_bar: 0.0,
            rho_bar: 1.0,
        };
        let x = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            margin_sphere_loss(&net, &bad, &x, &[Label::Normal], &p),
            Err(Error::Domain(_))
        ));
        let sphere = ExplicitSphere {
            center: vec![0.0, 0.0],
            r_bar: 1.0,
            rho_bar: 2.0,
        };
        // normal inside, abnormal beyond R̄ + ρ̄ = 3
        let x = Matrix::from_rows(&[vec![0.5, 0.0], vec![2.0, 0.0]]).unwrap();
        let l =
            margin_sphere_loss(&net, &sphere, &x, &[Label::Normal, Label::Abnormal], &p).unwrap();
        assert!((l - (1.0 - 1.0)).abs() < 1e-12);
        // single normal at distance² = R̄ + 1 adds 1
        let x = Matrix::from_rows(&[vec![2.0f64.sqrt(), 0.0]]).unwrap();
        let l = margin_sphere_loss(&net, &sphere, &x, &[Label::Normal], &p).unwrap();
        assert!((l - (1.0 - 1.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn deepsvdd_values_and_collapse() {
        let net = identity_net(vec![2.0, 0.0], 0.0, 0.0);
        let x = Matrix::from_rows(&[vec![0.1, 0.0], vec![0.0, -0.2]]).unwrap();
        let l = deepsvdd_loss(&net, &x, &[0.0, 0.0], 1.0, 0.5, 0.0).unwrap();
        assert_eq!(l, 1.0);
        // one point at distance² = R² + 2 with ν = 1 adds 2
        let x = Matrix::from_rows(&[vec![3.0f64.sqrt(), 0.0]]).unwrap();
        let l = deepsvdd_loss(&net, &x, &[0.0, 0.0], 1.0, 1.0, 0.0).unwrap();
        assert!((l - 3.0).abs() < 1e-12);
        // R = 0 and φ ≡ c leaves only the decay term
        let x = Matrix::from_rows(&[vec![0.3, 0.3], vec![0.3, 0.3]]).unwrap();
        let lambda = 0.1;
        let l = deepsvdd_loss(&net, &x, &[0.3, 0.3], 0.0, 0.5, lambda).unwrap();
        assert!((l - 0.5 * lambda * 2.0).abs() < 1e-15);
    }

    #[test]
    fn deepsvdd_rejects_abnormal_rows_without_anomaly_term() {
        let net = identity_net(vec![2.0], 0.0, 0.0);
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let spec = LossSpec::DeepSvdd {
            center: vec![0.0],
            r_sq: 0.5,
            nu: 0.5,
            lambda: 0.0,
            anomaly_nu2: None,
        };
        assert!(spec
            .value(&net, &x, &[Label::Normal, Label::Abnormal])
            .is_err());
    }

    #[test]
    fn nonfinite_term_is_named() {
        let net = identity_net(vec![2.0], f64::INFINITY, 0.0);
        let x = Matrix::from_rows(&[vec![0.0]]).unwrap();
        let err = imdad_loss(
            &net,
            &x,
            &[Label::Normal],
            &NuParams::default(),
            &Multipliers::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("1 - b"), "{err}");
    }

    #[test]
    fn imdad_matches_explicit_sphere() {
        let w = vec![1.2, -1.6];
        let net = identity_net(w, 0.3, 0.8);
        let view = view_hypersphere(&net);
        let x = Matrix::from_rows(&[
            vec![0.1, 0.4],
            vec![-0.6, 0.9],
            vec![2.0, -1.0],
            vec![0.0, 0.0],
        ])
        .unwrap();
        let labels = [
            Label::Normal,
            Label::Normal,
            Label::Abnormal,
            Label::Abnormal,
        ];
        let p = nu(0.4, 0.5, 0.7, 0.01);
        let a = imdad_loss(&net, &x, &labels, &p, &Multipliers::default()).unwrap();
        let sphere = ExplicitSphere {
            center: view.center,
            r_bar: view.r_bar,
            rho_bar: view.rho_bar,
        };
        let b = margin_sphere_loss(&net, &sphere, &x, &labels, &p).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
