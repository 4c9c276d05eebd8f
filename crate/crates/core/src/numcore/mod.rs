//! Dense linear algebra, the feed-forward network with analytic reverse-mode
//! gradients, and the Adam update rule.

mod adam;
mod matrix;
mod network;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use matrix::{dist_sq, dot, norm_sq, Matrix};
pub use network::{Activation, BatchForward, Forward, Gradients, Layer, Network, LEAKY_SLOPE};
