//! The detection head: reading the hypersphere out of the final layer, the
//! training objectives, anomaly scores and hyperparameter validation.

pub mod loss;
mod params;
mod score;
mod view;

pub use loss::{deepsvdd_loss, imdad_loss, margin_sphere_loss, ExplicitSphere, LossSpec};
pub use params::{validate_nu, Multipliers, NuParams};
pub use score::{
    deepsvdd_score, deepsvdd_scores, explicit_sphere_scores, imdad_score, imdad_scores,
    squared_distances,
};
pub use view::{
    decision_radius, equivalence_residual, view_hypersphere, HypersphereView, NORMALIZATION_TOL,
};
