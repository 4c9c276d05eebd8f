use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trade-off weights of the objective.
///
/// `nu` weights the margin, `nu1` and `nu2` scale the normal and abnormal
/// hinge penalties, and `lambda` is the weight-decay coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuParams {
    pub nu: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub lambda: f64,
}

impl Default for NuParams {
    fn default() -> Self {
        Self {
            nu: 0.1,
            nu1: 0.5,
            nu2: 0.5,
            lambda: 5e-6,
        }
    }
}

impl NuParams {
    pub fn new(nu: f64, nu1: f64, nu2: f64, lambda: f64) -> Result<Self> {
        let p = Self {
            nu,
            nu1,
            nu2,
            lambda,
        };
        validate_nu(&p)?;
        Ok(p)
    }

    /// Upper bound on the fraction of normal samples outside the inner sphere.
    pub fn normal_bound(&self) -> f64 {
        (self.nu + 1.0) * self.nu1
    }

    /// Upper bound on the fraction of abnormal samples inside the outer sphere.
    pub fn abnormal_bound(&self) -> f64 {
        self.nu * self.nu2
    }
}

/// Accepts iff `ν ≥ 0`, `0 < ν₁ ≤ 1/(ν+1)`, `0 < ν₂ ≤ 1/ν` (vacuous at `ν = 0`)
/// and `λ ≥ 0`.
pub fn validate_nu(p: &NuParams) -> Result<()> {
    let finite = [p.nu, p.nu1, p.nu2, p.lambda].iter().all(|v| v.is_finite());
    if !finite {
        return Err(Error::Domain(format!("non-finite hyperparameter in {p:?}")));
    }
    if p.nu < 0.0 {
        return Err(Error::Domain(format!("nu must be >= 0, got {}", p.nu)));
    }
    if p.nu1 <= 0.0 {
        return Err(Error::Domain(format!("nu1 must be > 0, got {}", p.nu1)));
    }
    if p.nu2 <= 0.0 {
        return Err(Error::Domain(format!("nu2 must be > 0, got {}", p.nu2)));
    }
    if p.lambda < 0.0 {
        return Err(Error::Domain(format!(
            "lambda must be >= 0, got {}",
            p.lambda
        )));
    }
    let nu1_max = 1.0 / (p.nu + 1.0);
    if p.nu1 > nu1_max {
        return Err(Error::Bound(format!(
            "nu1 = {} exceeds 1/(nu+1) = {nu1_max} for nu = {}",
            p.nu1, p.nu
        )));
    }
    if p.nu > 0.0 {
        let nu2_max = 1.0 / p.nu;
        if p.nu2 > nu2_max {
            return Err(Error::Bound(format!(
                "nu2 = {} exceeds 1/nu = {nu2_max} for nu = {}",
                p.nu2, p.nu
            )));
        }
    }
    Ok(())
}

/// Lagrange multipliers for `wᵀw = 4` (alpha), `b < 1` (beta) and `ρ̄ > 0` (gamma).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}
