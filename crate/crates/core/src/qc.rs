//! Quality control in two stages: surface density right after refinement,
//! then corner-angle statistics and top/bottom edge parallelism once the
//! reference points exist.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{LabeledCloud, Vec3};
use crate::mlkit::{convex_hull_2d, plane_frame, polygon_area};
use crate::reference::ReferencePoints;
use crate::refine::RefinedComponents;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QcError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("angle statistics need {need} ramps, got {got}")]
    InsufficientPopulation { got: usize, need: usize },
}

/// Mean and standard deviation of one corner angle (degrees).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerStats {
    pub mean: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QcParams {
    /// Points per square foot.
    pub min_density: f64,
    pub angle_z_limit: f64,
    pub parallel_tolerance_deg: f64,
    pub min_population: usize,
    /// Externally supplied angle statistics, one per corner in `CORNER_ORDER`.
    pub reference_stats: Option<[CornerStats; 4]>,
}

impl Default for QcParams {
    fn default() -> Self {
        Self {
            min_density: 40.0,
            angle_z_limit: 3.0,
            parallel_tolerance_deg: 10.0,
            min_population: 8,
            reference_stats: None,
        }
    }
}

impl QcParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("min_density", self.min_density),
            ("angle_z_limit", self.angle_z_limit),
            ("parallel_tolerance_deg", self.parallel_tolerance_deg),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.min_population == 0 {
            return Err("min_population must be positive".into());
        }
        if let Some(stats) = &self.reference_stats {
            if stats.iter().any(|s| !(s.sigma >= 0.0 && s.mean.is_finite())) {
                return Err("reference stats need finite means and non-negative sigmas".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum QcReason {
    DensityTooLow { value: f64 },
    AngleOutlier { corner: usize, z: f64 },
    EdgesNotParallel { angle: f64 },
    /// A check could not be evaluated.
    CheckFailed { check: String, message: String },
}

impl fmt::Display for QcReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QcReason::DensityTooLow { value } => write!(f, "DensityTooLow({value:.2})"),
            QcReason::AngleOutlier { corner, z } => write!(f, "AngleOutlier(P{corner}, z={z:.2})"),
            QcReason::EdgesNotParallel { angle } => write!(f, "EdgesNotParallel({angle:.2})"),
            QcReason::CheckFailed { check, message } => write!(f, "CheckFailed({check}: {message})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcVerdict {
    pub pass: bool,
    pub reasons: Vec<QcReason>,
}

impl QcVerdict {
    pub fn from_reasons(reasons: Vec<QcReason>) -> Self {
        Self { pass: reasons.is_empty(), reasons }
    }

    pub fn passed() -> Self {
        Self::from_reasons(Vec::new())
    }
}

/// Corner numbers of the quadrilateral walked in cyclic order.
pub const CORNER_ORDER: [usize; 4] = [1, 2, 4, 3];

/// Coreset points of each component projected onto the component's plane;
/// total coreset count over total hull area.
pub fn surface_density(cloud: &LabeledCloud, refined: &RefinedComponents) -> Result<f64, QcError> {
    let mut count = 0usize;
    let mut area = 0.0;
    for k in 0..3 {
        let pts = refined.coreset_points(cloud, k);
        let (u, v) = plane_frame(&refined.planes[k].normal);
        count += pts.len();
        area += projected_hull_area(&pts, &u, &v)?;
    }
    if !(area > 0.0) {
        return Err(QcError::DegenerateGeometry("coreset hulls have zero area".into()));
    }
    Ok(count as f64 / area)
}

fn projected_hull_area(pts: &[Vec3], u: &Vec3, v: &Vec3) -> Result<f64, QcError> {
    let flat: Vec<[f64; 2]> = pts.iter().map(|p| [p.dot(u), p.dot(v)]).collect();
    let hull = convex_hull_2d(&flat).map_err(|e| QcError::DegenerateGeometry(e.to_string()))?;
    let a = polygon_area(&hull).abs();
    if a <= 0.0 {
        return Err(QcError::DegenerateGeometry("zero-area coreset hull".into()));
    }
    Ok(a)
}

/// Density of a bare point set over its own plane, for callers without a refinement.
pub fn planar_density(pts: &[Vec3], normal: &Vec3) -> Result<f64, QcError> {
    let (u, v) = plane_frame(normal);
    Ok(pts.len() as f64 / projected_hull_area(pts, &u, &v)?)
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let (d1, d2) = (cross(a, b, c), cross(a, b, d));
    let (d3, d4) = (cross(c, d, a), cross(c, d, b));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Interior angles (degrees) of an arbitrary simple quadrilateral given in cyclic order.
pub fn quad_angles(q: [[f64; 2]; 4]) -> Result<[f64; 4], QcError> {
    for i in 0..4 {
        let (a, b, c) = (q[(i + 3) % 4], q[i], q[(i + 1) % 4]);
        let scale = ((b[0] - a[0]).hypot(b[1] - a[1])) * ((c[0] - b[0]).hypot(c[1] - b[1]));
        if !(scale > 0.0) || cross(a, b, c).abs() <= 1e-12 * scale {
            return Err(QcError::DegenerateGeometry(format!("corners around vertex {} are collinear", i + 1)));
        }
    }
    if segments_cross(q[0], q[1], q[2], q[3]) || segments_cross(q[1], q[2], q[3], q[0]) {
        return Err(QcError::DegenerateGeometry("quadrilateral self-intersects".into()));
    }
    let area2: f64 = (0..4).map(|i| q[i][0] * q[(i + 1) % 4][1] - q[(i + 1) % 4][0] * q[i][1]).sum();
    let orient = area2.signum();
    let mut out = [0.0; 4];
    for i in 0..4 {
        let (a, b, c) = (q[(i + 3) % 4], q[i], q[(i + 1) % 4]);
        let (e1, e2) = ([a[0] - b[0], a[1] - b[1]], [c[0] - b[0], c[1] - b[1]]);
        let theta = (e1[0] * e2[1] - e1[1] * e2[0]).abs().atan2(e1[0] * e2[0] + e1[1] * e2[1]).to_degrees();
        // Convex at b when the walk turns with the polygon's orientation.
        out[i] = if cross(a, b, c) * orient > 0.0 { theta } else { 360.0 - theta };
    }
    Ok(out)
}

/// Interior angles at P1, P2, P4, P3 of the center-ramp quadrilateral.
pub fn corner_angles(refs: &ReferencePoints) -> Result<[f64; 4], QcError> {
    quad_angles(CORNER_ORDER.map(|k| refs.xy(k)))
}

/// Per-corner z-scores above the limit for each ramp in the batch. Statistics
/// come from the batch itself (population standard deviation) unless external
/// ones are configured.
pub fn angle_filter(batch: &[[f64; 4]], params: &QcParams) -> Result<Vec<Vec<QcReason>>, QcError> {
    let stats = match params.reference_stats {
        Some(s) => s,
        None => {
            if batch.len() < params.min_population {
                return Err(QcError::InsufficientPopulation { got: batch.len(), need: params.min_population });
            }
            batch_stats(batch)
        }
    };
    Ok(batch
        .iter()
        .map(|angles| {
            (0..4)
                .filter_map(|k| {
                    let dev = angles[k] - stats[k].mean;
                    let z = if stats[k].sigma > 0.0 {
                        dev / stats[k].sigma
                    } else if dev.abs() > 1e-9 {
                        f64::INFINITY.copysign(dev)
                    } else {
                        0.0
                    };
                    (z.abs() > params.angle_z_limit).then_some(QcReason::AngleOutlier { corner: CORNER_ORDER[k], z })
                })
                .collect()
        })
        .collect())
}

/// Mean and population standard deviation per corner position.
pub fn batch_stats(batch: &[[f64; 4]]) -> [CornerStats; 4] {
    let n = batch.len().max(1) as f64;
    std::array::from_fn(|k| {
        let mean = batch.iter().map(|a| a[k]).sum::<f64>() / n;
        let var = batch.iter().map(|a| (a[k] - mean).powi(2)).sum::<f64>() / n;
        CornerStats { mean, sigma: var.sqrt() }
    })
}

/// Angle in degrees between the bottom edge P1→P2 and the top edge P3→P4.
pub fn edge_angle(refs: &ReferencePoints) -> Result<f64, QcError> {
    let (p1, p2, p3, p4) = (refs.xy(1), refs.xy(2), refs.xy(3), refs.xy(4));
    let u = [p2[0] - p1[0], p2[1] - p1[1]];
    let v = [p4[0] - p3[0], p4[1] - p3[1]];
    if u[0].hypot(u[1]) == 0.0 || v[0].hypot(v[1]) == 0.0 {
        return Err(QcError::DegenerateGeometry("zero-length ramp edge".into()));
    }
    Ok((u[0] * v[1] - u[1] * v[0]).abs().atan2(u[0] * v[0] + u[1] * v[1]).to_degrees())
}

/// `Some(reason)` when the edges diverge by more than the tolerance.
pub fn parallelism_check(refs: &ReferencePoints, params: &QcParams) -> Result<Option<QcReason>, QcError> {
    let angle = edge_angle(refs)?;
    Ok((angle > params.parallel_tolerance_deg).then_some(QcReason::EdgesNotParallel { angle }))
}

/// Everything QC computes for one ramp before the batch angle statistics exist.
#[derive(Debug, Clone, PartialEq)]
pub struct QcMeasures {
    pub density: Result<f64, QcError>,
    pub angles: Result<[f64; 4], QcError>,
    pub edge_angle: Result<f64, QcError>,
}

impl QcMeasures {
    pub fn compute(cloud: &LabeledCloud, refined: &RefinedComponents, refs: &ReferencePoints) -> Self {
        Self { density: surface_density(cloud, refined), angles: corner_angles(refs), edge_angle: edge_angle(refs) }
    }
}

/// Combine the per-ramp checks with the batch angle verdict. Every applicable
/// reason is reported; failed checks become reasons rather than errors.
pub fn run_qc(measures: &QcMeasures, angle_flags: Result<&[QcReason], &QcError>, params: &QcParams) -> QcVerdict {
    let failed = |check: &str, e: &QcError| QcReason::CheckFailed { check: check.into(), message: e.to_string() };
    let mut reasons = Vec::new();
    match &measures.density {
        Ok(d) if *d < params.min_density => reasons.push(QcReason::DensityTooLow { value: *d }),
        Ok(_) => {}
        Err(e) => reasons.push(failed("density", e)),
    }
    if let Err(e) = &measures.angles {
        reasons.push(failed("corner angles", e));
    }
    match angle_flags {
        Ok(flags) => reasons.extend_from_slice(flags),
        Err(e) => reasons.push(failed("angle statistics", e)),
    }
    match &measures.edge_angle {
        Ok(a) if *a > params.parallel_tolerance_deg => reasons.push(QcReason::EdgesNotParallel { angle: *a }),
        Ok(_) => {}
        Err(e) => reasons.push(failed("parallelism", e)),
    }
    QcVerdict::from_reasons(reasons)
}

/// Angle verdicts for a batch of per-ramp measures. Ramps whose angles could
/// not be computed are left out of the statistics and get no angle flags.
pub fn batch_angle_flags(measures: &[&QcMeasures], params: &QcParams) -> Result<Vec<Vec<QcReason>>, QcError> {
    let valid: Vec<(usize, [f64; 4])> =
        measures.iter().enumerate().filter_map(|(i, m)| m.angles.as_ref().ok().map(|a| (i, *a))).collect();
    let angles: Vec<[f64; 4]> = valid.iter().map(|(_, a)| *a).collect();
    let flags = angle_filter(&angles, params)?;
    let mut out = vec![Vec::new(); measures.len()];
    for ((i, _), f) in valid.into_iter().zip(flags) {
        out[i] = f;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::ReferencePoints;

    fn refs_from(c: [[f64; 2]; 4]) -> ReferencePoints {
        let v = |p: [f64; 2]| Vec3::new(p[0], p[1], 0.0);
        ReferencePoints { p: [v(c[0]), v(c[1]), v(c[2]), v(c[3]), v([-5.0, 0.0]), v([5.0, 0.0])] }
    }

    #[test]
    fn rectangle_angles_and_parallel_edges() {
        let refs = refs_from([[0.0, 0.0], [4.0, 0.0], [0.0, 7.0], [4.0, 7.0]]);
        let a = corner_angles(&refs).unwrap();
        for v in a {
            assert!((v - 90.0).abs() < 1e-12);
        }
        assert_eq!(parallelism_check(&refs, &QcParams::default()).unwrap(), None);
        assert!(edge_angle(&refs).unwrap().abs() < 1e-12);
    }

    #[test]
    fn trapezoid_angles_sum_to_360() {
        // Left side leans by atan(1/7).
        let refs = refs_from([[0.0, 0.0], [4.0, 0.0], [1.0, 7.0], [4.0, 7.0]]);
        let a = corner_angles(&refs).unwrap();
        let lean = (1.0f64 / 7.0).atan().to_degrees();
        assert!((a[0] - (90.0 - lean)).abs() < 1e-9);
        assert!((a[3] - (90.0 + lean)).abs() < 1e-9);
        assert!((a.iter().sum::<f64>() - 360.0).abs() < 1e-9);
    }

    #[test]
    fn reflex_corner_is_reported() {
        let a = quad_angles([[0.0, 0.0], [4.0, 0.0], [1.0, 1.0], [0.0, 4.0]]).unwrap();
        assert!(a[2] > 180.0);
        assert!((a.iter().sum::<f64>() - 360.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_quads_are_rejected() {
        assert!(quad_angles([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]]).is_err());
        // Bow tie: edges 1-2 and 3-4 cross.
        assert!(quad_angles([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]).is_err());
    }

    #[test]
    fn rotated_top_edge_fails_parallelism() {
        let t = 12f64.to_radians().tan() * 4.0;
        let refs = refs_from([[0.0, 0.0], [4.0, 0.0], [0.0, 7.0], [4.0, 7.0 + t]]);
        let reason = parallelism_check(&refs, &QcParams::default()).unwrap();
        match reason {
            Some(QcReason::EdgesNotParallel { angle }) => assert!((angle - 12.0).abs() < 1e-9),
            other => panic!("unexpected {other:?}"),
        }
        let loose = QcParams { parallel_tolerance_deg: 15.0, ..Default::default() };
        assert_eq!(parallelism_check(&refs, &loose).unwrap(), None);
    }

    #[test]
    fn one_wide_corner_in_ten_rectangles() {
        let mut batch = vec![[90.0; 4]; 10];
        batch.push([150.0, 90.0, 90.0, 30.0]);
        // Hand computation: mean 95.4545, population sigma sqrt(297.52) = 17.249, z = 3.162.
        let flags = angle_filter(&batch, &QcParams::default()).unwrap();
        assert!(flags[..10].iter().all(|f| f.is_empty()));
        match &flags[10][0] {
            QcReason::AngleOutlier { corner, z } => {
                assert_eq!(*corner, 1);
                assert!((z - 10f64.sqrt()).abs() < 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(flags[10].len(), 2);
    }

    #[test]
    fn identical_batch_never_flags() {
        let batch = vec![[88.0, 92.0, 91.0, 89.0]; 9];
        assert!(angle_filter(&batch, &QcParams::default()).unwrap().iter().all(|f| f.is_empty()));
    }

    #[test]
    fn small_batch_needs_external_stats() {
        let batch = vec![[90.0; 4]; 3];
        assert_eq!(
            angle_filter(&batch, &QcParams::default()),
            Err(QcError::InsufficientPopulation { got: 3, need: 8 })
        );
        let stats = [CornerStats { mean: 90.0, sigma: 1.0 }; 4];
        let p = QcParams { reference_stats: Some(stats), ..Default::default() };
        assert!(angle_filter(&batch, &p).unwrap().iter().all(|f| f.is_empty()));
    }

    #[test]
    fn angle_verdicts_ignore_batch_order() {
        let mut batch: Vec<[f64; 4]> = (0..12).map(|i| [90.0 + i as f64 * 0.3, 90.0, 90.0, 90.0]).collect();
        batch.push([140.0, 90.0, 90.0, 90.0]);
        let flags = angle_filter(&batch, &QcParams::default()).unwrap();
        let mut rev = batch.clone();
        rev.reverse();
        let mut flags_rev = angle_filter(&rev, &QcParams::default()).unwrap();
        flags_rev.reverse();
        assert_eq!(flags, flags_rev);
    }

    #[test]
    fn planar_density_of_uniform_patch() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        // 400 points on a 2 x 5 ft patch tilted by a 7% grade.
        let pts: Vec<Vec3> = (0..400)
            .map(|_| {
                let (x, y) = (rng.random_range(0.0..2.0), rng.random_range(0.0..5.0));
                Vec3::new(x, y * (1.0 - 0.07f64.powi(2)).sqrt(), 0.07 * y)
            })
            .collect();
        let normal = Vec3::new(0.0, -0.07, 1.0).normalize();
        let d = planar_density(&pts, &normal).unwrap();
        assert!((d - 40.0).abs() < 4.0, "density {d}");
        let doubled: Vec<Vec3> = pts.iter().chain(pts.iter()).copied().collect();
        assert!((planar_density(&doubled, &normal).unwrap() - 2.0 * d).abs() < 1e-9);
        let line: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        assert!(planar_density(&line, &Vec3::z()).is_err());
    }

    #[test]
    fn run_qc_collects_every_reason() {
        let refs = refs_from([[0.0, 0.0], [4.0, 0.0], [0.0, 7.0], [4.0, 9.0]]);
        let measures =
            QcMeasures { density: Ok(5.0), angles: corner_angles(&refs), edge_angle: edge_angle(&refs) };
        let flags = vec![QcReason::AngleOutlier { corner: 4, z: 3.5 }];
        let v = run_qc(&measures, Ok(&flags), &QcParams::default());
        assert!(!v.pass);
        assert_eq!(v.reasons.len(), 3);
        assert_eq!(v.reasons[0], QcReason::DensityTooLow { value: 5.0 });
        let clean = QcMeasures { density: Ok(60.0), angles: Ok([90.0; 4]), edge_angle: Ok(0.5) };
        assert!(run_qc(&clean, Ok(&[]), &QcParams::default()).pass);
    }
}
