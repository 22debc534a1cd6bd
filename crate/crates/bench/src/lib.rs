//! Shared inputs for the benchmarks.

use curbramp_core::synth::{generate, RampSpec};
use curbramp_core::{LabeledCloud, Vec3};

/// A default synthetic ramp at the given density (points per square foot).
pub fn ramp(density: f64, seed: u64) -> LabeledCloud {
    generate(&RampSpec { density, seed, ..RampSpec::default() }).expect("default spec is valid").0
}

/// The first `n` points of a dense ramp.
pub fn points(n: usize) -> Vec<Vec3> {
    let cloud = ramp(60.0, 1);
    cloud.points.iter().take(n).map(|p| p.vec()).collect()
}

/// Top-down coordinates of `n` ramp points.
pub fn points_2d(n: usize) -> Vec<[f64; 2]> {
    points(n).iter().map(|p| [p.x, p.y]).collect()
}
