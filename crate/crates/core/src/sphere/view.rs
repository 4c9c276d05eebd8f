use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{norm_sq, Network};

/// Tolerance on `‖w‖² = 4` under which the final layer is read as a sphere
/// with unit-norm center.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// The detection hypersphere encoded by a network's final layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypersphereView {
    /// Center `c = −w/2`.
    pub center: Vec<f64>,
    /// Squared inner radius `R̄ = 1 − b`.
    pub r_bar: f64,
    /// Squared margin.
    pub rho_bar: f64,
    /// Decision radius term of the deployed score.
    pub t: f64,
    /// Set when `R̄` or `ρ̄` was negative and clamped at zero inside `T`.
    pub clamped: bool,
}

/// `T = R̄ + (√(R̄+ρ̄) − √R̄)/2`, with `R̄` and `ρ̄` clamped at zero under the roots.
pub fn decision_radius(r_bar: f64, rho_bar: f64) -> f64 {
    let r = r_bar.max(0.0);
    let rho = rho_bar.max(0.0);
    r_bar + ((r + rho).sqrt() - r.sqrt()) / 2.0
}

pub fn view_hypersphere(net: &Network) -> HypersphereView {
    let center = net.final_w().iter().map(|w| -w / 2.0).collect();
    let r_bar = 1.0 - net.final_b();
    let rho_bar = net.rho_bar();
    HypersphereView {
        center,
        r_bar,
        rho_bar,
        t: decision_radius(r_bar, rho_bar),
        clamped: r_bar < 0.0 || rho_bar < 0.0,
    }
}

impl HypersphereView {
    pub fn center_norm_sq(&self) -> f64 {
        norm_sq(&self.center)
    }

    /// Radius of the inner (normal-enclosing) sphere.
    pub fn inner_radius(&self) -> f64 {
        self.r_bar.max(0.0).sqrt()
    }

    /// Radius of the outer (abnormal-excluding) sphere.
    pub fn outer_radius(&self) -> f64 {
        (self.r_bar.max(0.0) + self.rho_bar.max(0.0)).sqrt()
    }
}

/// `|(‖φ(x)−c‖² − R̄) − (g(x) + ‖φ(x)‖²)|` for the sphere read out of `net`.
///
/// The two sides agree identically once `‖w‖² = 4`; if that normalization is
/// off by more than [`NORMALIZATION_TOL`] the deviation is reported as an error.
pub fn equivalence_residual(net: &Network, x: &[f64]) -> Result<f64> {
    let deviation = net.w_norm_sq() - 4.0;
    if deviation.abs() > NORMALIZATION_TOL {
        return Err(Error::Domain(format!(
            "final weight not normalized: ‖w‖² − 4 = {deviation:e}"
        )));
    }
    let out = net.forward(x)?;
    let view = view_hypersphere(net);
    let lhs = crate::numcore::dist_sq(&out.phi, &view.center) - view.r_bar;
    let rhs = out.g + norm_sq(&out.phi);
    Ok((lhs - rhs).abs())
}
