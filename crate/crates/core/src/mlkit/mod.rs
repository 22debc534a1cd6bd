//! Classic geometry and machine-learning building blocks used by the refinement
//! pipeline: total-least-squares fits, one-class SVM, isolation forest, DBSCAN,
//! 2D convex hulls and a uniform-grid spatial index.

mod dbscan;
mod fit;
mod hull;
mod iforest;
mod ocsvm;
mod spatial;

pub use dbscan::{dbscan, largest_cluster, NOISE};
pub use fit::{fit_line3, fit_plane, plane_frame, point_plane_distance};
pub use hull::{convex_hull_2d, point_in_convex_polygon, polygon_area};
pub use iforest::{iforest_flag, IsolationForestModel};
pub use ocsvm::{default_gamma, ocsvm_coreset, ocsvm_fit, OcsvmModel, OcsvmParams};
pub use spatial::{radius_neighbors, SpatialIndex};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("too few points: got {got}, need at least {need}")]
    TooFewPoints { got: usize, need: usize },
    #[error("nu must lie in (0, 1), got {0}")]
    InvalidNu(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("solver did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("point set has zero variance")]
    ZeroVariance,
}
