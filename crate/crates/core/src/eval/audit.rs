use serde::{Deserialize, Serialize};

use crate::data::{Label, LabeledDataset};
use crate::error::Result;
use crate::numcore::Network;
use crate::sphere::{squared_distances, view_hypersphere, NuParams};

/// Empirical check of the ν-property bounds on a labelled set.
///
/// Membership uses the two spheres themselves (distance² against `R̄` and
/// `R̄ + ρ̄`), not the deployed score. Bounds are strict: a ratio equal to its
/// bound is reported as not satisfied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuAuditReport {
    /// Normal rows strictly outside the inner sphere.
    pub n_out_plus: usize,
    /// Normal rows audited.
    pub m: usize,
    /// Abnormal rows strictly inside the outer sphere.
    pub n_out_minus: usize,
    /// Abnormal rows audited.
    pub n_minus: usize,
    pub normal_ratio: f64,
    pub abnormal_ratio: f64,
    pub bound_normal: f64,
    pub bound_abnormal: f64,
    pub satisfied_normal: bool,
    pub satisfied_abnormal: bool,
    pub r_bar: f64,
    pub rho_bar: f64,
}

impl NuAuditReport {
    pub fn satisfied(&self) -> bool {
        self.satisfied_normal && self.satisfied_abnormal
    }
}

/// Audit from precomputed squared distances.
pub fn nu_audit_distances(
    dist_sq: &[f64],
    labels: &[Label],
    r_bar: f64,
    rho_bar: f64,
    nu: &NuParams,
) -> NuAuditReport {
    let mut n_out_plus = 0;
    let mut m = 0;
    let mut n_out_minus = 0;
    let mut n_minus = 0;
    let outer = r_bar + rho_bar;
    for (d, l) in dist_sq.iter().zip(labels) {
        match l {
            Label::Normal => {
                m += 1;
                if *d > r_bar {
                    n_out_plus += 1;
                }
            }
            Label::Abnormal => {
                n_minus += 1;
                if *d < outer {
                    n_out_minus += 1;
                }
            }
        }
    }
    let ratio = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let normal_ratio = ratio(n_out_plus, m);
    let abnormal_ratio = ratio(n_out_minus, n_minus);
    let bound_normal = nu.normal_bound();
    let bound_abnormal = nu.abnormal_bound();
    NuAuditReport {
        n_out_plus,
        m,
        n_out_minus,
        n_minus,
        normal_ratio,
        abnormal_ratio,
        bound_normal,
        bound_abnormal,
        satisfied_normal: normal_ratio < bound_normal,
        satisfied_abnormal: abnormal_ratio < bound_abnormal,
        r_bar,
        rho_bar,
    }
}

/// Audit of a trained end-to-end network on `data`.
pub fn nu_audit(net: &Network, data: &LabeledDataset, nu: &NuParams) -> Result<NuAuditReport> {
    let view = view_hypersphere(net);
    let d = squared_distances(net, data.x(), &view.center)?;
    Ok(nu_audit_distances(
        &d,
        data.labels(),
        view.r_bar,
        view.rho_bar,
        nu,
    ))
}
