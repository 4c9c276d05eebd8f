//! Metrics, ν-property auditing and visualization exports.

mod audit;
mod export;
mod metrics;

pub use audit::{nu_audit, nu_audit_distances, NuAuditReport};
pub use export::{
    distance_histogram, export_boundary, export_distance_density, representation, BoundaryGrid,
    DistanceHistogram, GridPoint, GridSpace,
};
pub use metrics::{accuracy, auc, mean_std, quantile};
