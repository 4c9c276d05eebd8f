//! Anomaly detection with a hypersphere built into the last layer of a
//! feed-forward network.
//!
//! The network's final linear unit `g(x) = wᵀφ(x) + b` doubles as a sphere with
//! center `-w/2` and squared radius `1 - b` once `‖w‖² = 4`. A learnable margin
//! `ρ̄` separates an inner sphere for normal rows from an outer one that
//! labelled anomalies are pushed beyond. Training enforces the normalization
//! through Lagrange multipliers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod numcore;
pub mod sphere;
pub mod trainer;

pub use error::{Error, Result};
