//! Feature measurements on a refined, QC-approved ramp.
//!
//! Every value comes from a seed segment laid between reference points (or
//! between the corners of an approximated landing, gutter or road region),
//! refined against the surrounding surface points.

mod lines;
mod ramp;
mod record;
mod regions;

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};
use thiserror::Error;

pub use lines::{
    iterative_line_refit, line_slope_percent, nearest_to_segment, percent_grade, quad_reference_lines, ReferenceLines,
    Refit,
};
pub use ramp::{measure_center_ramp, measure_flares};
pub use record::{Feature, MeasurementRecord, MEASUREMENT_COUNT};
pub use regions::{
    approximate_gutter, approximate_landing, extend_edge, measure_gutter_and_road, measure_landing, road_band,
    EdgeSearch, RegionQuad, SurfaceProbe,
};

use crate::cloud::{LabeledCloud, Vec3};
use crate::qc::QcVerdict;
use crate::reference::RampGeometry;
use crate::refine::RefinedComponents;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("angle {0}° is outside (-90°, 90°)")]
    OutOfRange(f64),
    #[error("line is vertical")]
    VerticalLine,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("only {got} supporting points remain")]
    InsufficientSupport { got: usize },
    #[error("refit still dropping points after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("no surface points found while extending (step {step})")]
    NoSurfacePoints { step: usize },
    #[error("ramp did not pass quality control")]
    QcNotPassed,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct MeasureParams {
    /// Positions of the three reference lines along each edge.
    pub fractions: [f64; 3],
    /// Positions of the two gutter lines running parallel to the curb.
    pub gutter_fractions: [f64; 2],
    /// Points gathered around each seed segment.
    pub neighbors: usize,
    /// Points farther than this from the local surface are dropped (ft).
    pub discard_ft: f64,
    pub max_iterations: usize,
    /// Step of the landing and gutter extension search (ft).
    pub step_ft: f64,
    /// Change in chord grade (percent points) that ends an extension.
    pub slope_jump_pct: f64,
    pub max_extension_ft: f64,
    /// Radius of the vertical cylinder used to read the surface height (ft).
    pub cylinder_radius_ft: f64,
    /// Cylinders with fewer points give no height reading.
    pub min_cylinder_points: usize,
    /// Chord grades closer to the corner than this are not compared (ft).
    pub min_monitor_ft: f64,
}

impl Default for MeasureParams {
    fn default() -> Self {
        Self {
            fractions: [0.1, 0.5, 0.9],
            gutter_fractions: [1.0 / 3.0, 2.0 / 3.0],
            neighbors: 300,
            discard_ft: 1.0 / 48.0,
            max_iterations: 50,
            step_ft: 0.25,
            slope_jump_pct: 2.0,
            max_extension_ft: 8.0,
            cylinder_radius_ft: 0.15,
            min_cylinder_points: 3,
            min_monitor_ft: 0.75,
        }
    }
}

impl MeasureParams {
    pub fn validate(&self) -> Result<(), MeasureError> {
        let bad = |m: &str| Err(MeasureError::InvalidParameter(m.to_string()));
        if !self.fractions.iter().chain(self.gutter_fractions.iter()).all(|&f| f > 0.0 && f < 1.0) {
            return bad("fractions must lie in (0, 1)");
        }
        if self.min_cylinder_points == 0 {
            return bad("min_cylinder_points must be at least 1");
        }
        if self.neighbors < 10 {
            return bad("neighbors must be at least 10");
        }
        if !(self.discard_ft > 0.0) {
            return bad("discard distance must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.step_ft > 0.0 && self.max_extension_ft >= self.step_ft) {
            return bad("extension step must be positive and no larger than the maximum extension");
        }
        if !(self.slope_jump_pct > 0.0 && self.cylinder_radius_ft > 0.0 && self.min_monitor_ft >= 0.0) {
            return bad("slope jump and cylinder radius must be positive");
        }
        Ok(())
    }
}

/// Four corners of a measured region: `bl→br` is the edge nearest the ramp,
/// `tl→tr` the far edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    pub bl: Vec3,
    pub br: Vec3,
    pub tl: Vec3,
    pub tr: Vec3,
}

impl Quad {
    /// Corners as a counterclockwise polygon.
    pub fn polygon(&self) -> Result<[[f64; 2]; 4], MeasureError> {
        let xy = |v: &Vec3| [v.x, v.y];
        let mut poly = [xy(&self.bl), xy(&self.br), xy(&self.tr), xy(&self.tl)];
        if crate::mlkit::polygon_area(&poly) < 0.0 {
            poly.reverse();
        }
        let turn = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
        if !(0..4).all(|i| turn(poly[i], poly[(i + 1) % 4], poly[(i + 2) % 4]) > 1e-12) {
            return Err(MeasureError::DegenerateGeometry("region is not a convex quadrilateral".into()));
        }
        Ok(poly)
    }

    pub fn corners(&self) -> [[f64; 3]; 4] {
        [self.bl, self.br, self.tr, self.tl].map(|v| [v.x, v.y, v.z])
    }
}

impl Serialize for Quad {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.corners().serialize(s)
    }
}

/// Outcome of one sub-measurement.
pub type Reading = Result<f64, MeasureError>;

/// Everything measured on one ramp.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureReport {
    pub record: MeasurementRecord,
    /// Why each invalid sub-measurement failed, keyed by name (e.g. `"D1"`).
    pub invalid: BTreeMap<String, String>,
    pub landing: Option<RegionQuad>,
    pub gutter: Option<RegionQuad>,
    pub road: Option<Quad>,
    /// Notes about approximated regions.
    pub flags: Vec<String>,
}

impl MeasureReport {
    fn put(&mut self, feature: Feature, sub: usize, reading: Reading) {
        match reading {
            Ok(v) => self.record.set(feature, sub, Some(v)),
            Err(e) => {
                self.record.set(feature, sub, None);
                self.invalid.insert(format!("{feature}{}", sub + 1), e.to_string());
            }
        }
    }

    fn fail_all(&mut self, features: &[Feature], err: &MeasureError) {
        for &f in features {
            for k in 0..f.sub_count() {
                self.put(f, k, Err(err.clone()));
            }
        }
    }
}

/// Measure all 31 sub-measurements of a ramp. Individual failures leave the
/// affected values invalid; only a failed QC verdict aborts.
pub fn measure_ramp(
    cloud: &LabeledCloud,
    refined: &RefinedComponents,
    geometry: &RampGeometry,
    qc: &QcVerdict,
    params: &MeasureParams,
) -> Result<MeasureReport, MeasureError> {
    if !qc.pass {
        return Err(MeasureError::QcNotPassed);
    }
    params.validate()?;
    let mut report = MeasureReport {
        record: MeasurementRecord::new(),
        invalid: BTreeMap::new(),
        landing: None,
        gutter: None,
        road: None,
        flags: Vec::new(),
    };

    let center = refined.points(cloud, 0);
    for (f, k, r) in measure_center_ramp(&center, geometry, params) {
        report.put(f, k, r);
    }
    let (left, right) = (refined.points(cloud, 1), refined.points(cloud, 2));
    for (f, k, r) in measure_flares(&left, &right, &geometry.refs, params) {
        report.put(f, k, r);
    }

    let probe = SurfaceProbe::new(cloud, params.cylinder_radius_ft, params.min_cylinder_points);
    match approximate_landing(&probe, &geometry.refs, params) {
        Ok(landing) => {
            report.flags.push("landing: approximated region".into());
            if landing.exhausted {
                report.flags.push("landing: no slope jump within maximum extension".into());
            }
            for (f, k, r) in measure_landing(&probe, &landing.quad, params) {
                report.put(f, k, r);
            }
            report.landing = Some(landing);
        }
        Err(e) => report.fail_all(&[Feature::I, Feature::J, Feature::K, Feature::L], &e),
    }
    match approximate_gutter(&probe, &geometry.refs, params) {
        Ok(gutter) => {
            report.flags.push("gutter: approximated region".into());
            report.flags.push("road: band of gutter depth beyond the gutter".into());
            if gutter.exhausted {
                report.flags.push("gutter: no slope jump within maximum extension".into());
            }
            let road = road_band(&probe, &gutter);
            for (f, k, r) in measure_gutter_and_road(&probe, &gutter.quad, road.as_ref(), params) {
                report.put(f, k, r);
            }
            report.road = road.ok();
            report.gutter = Some(gutter);
        }
        Err(e) => report.fail_all(&[Feature::F, Feature::G, Feature::H], &e),
    }
    Ok(report)
}
