//! Curb-ramp geometry extraction and compliance measurement from labeled
//! LiDAR point clouds.

pub mod cloud;
pub mod compliance;
pub mod measure;
pub mod mlkit;
pub mod pipeline;
pub mod qc;
pub mod raster;
pub mod reference;
pub mod refine;
pub mod synth;

pub use cloud::{ComponentLabel, LabeledCloud, Line2, Line3, Plane, Point3, Segment3, Vec3};
