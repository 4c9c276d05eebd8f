use super::view::{decision_radius, view_hypersphere};
use crate::error::{Error, Result};
use crate::numcore::{dist_sq, Matrix, Network};

/// Deployed anomaly score `‖φ(x)−c‖² − T²`; positive means abnormal.
pub fn imdad_score(net: &Network, x: &[f64]) -> Result<f64> {
    let view = view_hypersphere(net);
    let phi = net.forward(x)?.phi;
    Ok(dist_sq(&phi, &view.center) - view.t * view.t)
}

/// [`imdad_score`] over every row of `x`.
pub fn imdad_scores(net: &Network, x: &Matrix) -> Result<Vec<f64>> {
    let view = view_hypersphere(net);
    let out = net.forward_batch(x)?;
    let t_sq = view.t * view.t;
    Ok(out
        .phi
        .iter_rows()
        .map(|phi| dist_sq(phi, &view.center) - t_sq)
        .collect())
}

/// Score of an explicit two-sphere model (`R̄`, `ρ̄` held outside the network).
pub fn explicit_sphere_scores(
    net: &Network,
    x: &Matrix,
    center: &[f64],
    r_bar: f64,
    rho_bar: f64,
) -> Result<Vec<f64>> {
    check_center(net, center)?;
    let t = decision_radius(r_bar, rho_bar);
    let out = net.forward_batch(x)?;
    Ok(out
        .phi
        .iter_rows()
        .map(|phi| dist_sq(phi, center) - t * t)
        .collect())
}

/// Deep SVDD score `‖φ(x)−c‖² − R²`.
pub fn deepsvdd_score(net: &Network, x: &[f64], center: &[f64], r_sq: f64) -> Result<f64> {
    check_center(net, center)?;
    let phi = net.forward(x)?.phi;
    Ok(dist_sq(&phi, center) - r_sq)
}

pub fn deepsvdd_scores(net: &Network, x: &Matrix, center: &[f64], r_sq: f64) -> Result<Vec<f64>> {
    check_center(net, center)?;
    let out = net.forward_batch(x)?;
    Ok(out
        .phi
        .iter_rows()
        .map(|phi| dist_sq(phi, center) - r_sq)
        .collect())
}

/// Squared distances `‖φ(x)−c‖²` for every row.
pub fn squared_distances(net: &Network, x: &Matrix, center: &[f64]) -> Result<Vec<f64>> {
    check_center(net, center)?;
    let out = net.forward_batch(x)?;
    Ok(out
        .phi
        .iter_rows()
        .map(|phi| dist_sq(phi, center))
        .collect())
}

fn check_center(net: &Network, center: &[f64]) -> Result<()> {
    if center.len() != net.rep_dim() {
        return Err(Error::Shape(format!(
            "center length {} vs representation dim {}",
            center.len(),
            net.rep_dim()
        )));
    }
    Ok(())
}
