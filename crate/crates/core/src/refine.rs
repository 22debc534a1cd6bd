//! Turns noisy per-point component labels into geometry-consistent
//! assignments for the center ramp (with its warning surface) and the two
//! flares, in six stages:
//!
//! * A: one-class SVM coresets per component
//! * B: plane fits and nearest-plane reassignment
//! * C: half-space cross filtering between component planes
//! * D: quadrant filtering against the ramp's bottom edge
//! * E: local normal consistency
//! * F: isolation-forest and density-cluster cleanup

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{save_labeled_cloud, CloudError, ComponentLabel, LabeledCloud, Line2, Plane, Vec3};
use crate::mlkit::{
    dbscan, fit_plane, iforest_flag, largest_cluster, ocsvm_coreset, ocsvm_fit, MlError, OcsvmParams, SpatialIndex,
};
use crate::reference::{self, RefError};

/// Component slots in refinement order; ties between planes go to the lower slot.
pub const COMPONENTS: [ComponentLabel; 3] =
    [ComponentLabel::CenterRamp, ComponentLabel::LeftFlare, ComponentLabel::RightFlare];

pub const STAGES: [char; 6] = ['A', 'B', 'C', 'D', 'E', 'F'];

fn component_name(k: usize) -> &'static str {
    ["center ramp", "left flare", "right flare"][k]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineParams {
    pub nu: f64,
    pub gamma: Option<f64>,
    pub max_train: usize,
    /// Plane distance threshold for reassignment (ft).
    pub plane_threshold: f64,
    /// Neighborhood radius for local normals (ft).
    pub normal_radius: f64,
    pub cos_threshold: f64,
    pub min_neighbors: usize,
    pub iforest_trees: usize,
    pub contamination: f64,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    pub candidate_cap: usize,
    pub seed: u64,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            nu: 0.7,
            gamma: None,
            max_train: 2000,
            plane_threshold: 0.05,
            normal_radius: 0.25,
            cos_threshold: 0.999,
            min_neighbors: 5,
            iforest_trees: 100,
            contamination: 0.02,
            dbscan_eps: 2.0,
            dbscan_min_pts: 10,
            candidate_cap: reference::DEFAULT_CANDIDATE_CAP,
            seed: 0,
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("plane_threshold", self.plane_threshold),
            ("normal_radius", self.normal_radius),
            ("dbscan_eps", self.dbscan_eps),
            ("contamination", self.contamination),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(format!("nu must lie in (0, 1), got {}", self.nu));
        }
        if !(self.cos_threshold > 0.0 && self.cos_threshold <= 1.0) {
            return Err(format!("cos_threshold must lie in (0, 1], got {}", self.cos_threshold));
        }
        if self.iforest_trees == 0 || self.dbscan_min_pts == 0 || self.max_train < 10 || self.candidate_cap < 2 {
            return Err("tree count, min_pts, max_train and candidate cap must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error("missing component: {0}")]
    MissingComponent(&'static str),
    #[error("{component} has {got} points, need at least 10")]
    TooFewPoints { component: &'static str, got: usize },
    #[error("empty coreset for {0}")]
    EmptyCoreset(&'static str),
    #[error("stage {stage}: {component}: {error}")]
    Ml { stage: char, component: &'static str, error: MlError },
    #[error("stage {stage}: {error}")]
    Reference { stage: char, error: RefError },
    #[error("stage D: center-ramp centroid lies on a quadrant plane")]
    AmbiguousQuadrant,
    #[error("stage D: bottom line is degenerate")]
    DegenerateBottomLine,
    #[error("stage F: {0} vanished during cleanup")]
    EmptyResult(&'static str),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Per-point assignment: component slot (0..3) or `None` for unassigned.
pub type Assignment = Vec<Option<u8>>;

#[derive(Debug, Clone)]
pub struct RefinedComponents {
    /// Final assignment per input point.
    pub assignment: Assignment,
    /// Coreset indices per component (into the input cloud).
    pub coresets: [Vec<usize>; 3],
    pub planes: [Plane; 3],
    pub centroids: [Vec3; 3],
    /// Bottom edge of the center ramp used by the quadrant filter.
    pub bottom_line: Line2,
    /// Assignment snapshot after each stage A..F.
    pub stages: Vec<(char, Assignment)>,
}

impl RefinedComponents {
    pub fn indices(&self, k: usize) -> Vec<usize> {
        indices_of(&self.assignment, k)
    }

    pub fn points(&self, cloud: &LabeledCloud, k: usize) -> Vec<Vec3> {
        self.indices(k).into_iter().map(|i| cloud.points[i].vec()).collect()
    }

    pub fn unassigned(&self) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i].is_none()).collect()
    }

    pub fn coreset_points(&self, cloud: &LabeledCloud, k: usize) -> Vec<Vec3> {
        self.coresets[k].iter().map(|&i| cloud.points[i].vec()).collect()
    }

    pub fn stage(&self, stage: char) -> Option<&Assignment> {
        self.stages.iter().find(|(s, _)| *s == stage).map(|(_, a)| a)
    }

    /// The input cloud relabeled with refined components. Points left
    /// unassigned keep a Landing or Gutter input label.
    pub fn labeled(&self, original: &LabeledCloud) -> LabeledCloud {
        relabel(original, &self.assignment)
    }
}

fn indices_of(a: &Assignment, k: usize) -> Vec<usize> {
    (0..a.len()).filter(|&i| a[i] == Some(k as u8)).collect()
}

fn relabel(original: &LabeledCloud, assignment: &Assignment) -> LabeledCloud {
    let labels = assignment
        .iter()
        .zip(&original.labels)
        .map(|(a, &l)| match a {
            Some(k) => COMPONENTS[*k as usize],
            None if matches!(l, ComponentLabel::Landing | ComponentLabel::Gutter) => l,
            None => ComponentLabel::Unassigned,
        })
        .collect();
    LabeledCloud { id: original.id.clone(), points: original.points.clone(), labels }
}

fn derive(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^ (z >> 31)
}

/// Warning-surface points join the center ramp; landing and gutter points
/// become unassigned for refinement.
pub fn merge_warning_surface(cloud: &LabeledCloud) -> Result<LabeledCloud, RefineError> {
    let labels: Vec<ComponentLabel> = cloud
        .labels
        .iter()
        .map(|&l| match l {
            ComponentLabel::WarningSurface => ComponentLabel::CenterRamp,
            ComponentLabel::Landing | ComponentLabel::Gutter => ComponentLabel::Unassigned,
            other => other,
        })
        .collect();
    if !labels.contains(&ComponentLabel::CenterRamp) {
        return Err(RefineError::MissingComponent("center ramp"));
    }
    Ok(LabeledCloud { id: cloud.id.clone(), points: cloud.points.clone(), labels })
}

fn initial_assignment(merged: &LabeledCloud) -> Assignment {
    merged.labels.iter().map(|l| COMPONENTS.iter().position(|c| c == l).map(|k| k as u8)).collect()
}

/// Stage A: one-class SVM coreset for each component.
pub fn extract_coresets(
    points: &[Vec3],
    assignment: &Assignment,
    params: &RefineParams,
) -> Result<[Vec<usize>; 3], RefineError> {
    let run = |k: usize| -> Result<Vec<usize>, RefineError> {
        let idx = indices_of(assignment, k);
        if idx.len() < 10 {
            return Err(RefineError::TooFewPoints { component: component_name(k), got: idx.len() });
        }
        let pts: Vec<Vec3> = idx.iter().map(|&i| points[i]).collect();
        let ocsvm = OcsvmParams { nu: params.nu, gamma: params.gamma, max_train: params.max_train, ..Default::default() };
        let model = ocsvm_fit(&pts, &ocsvm, derive(params.seed, 100 + k as u64))
            .map_err(|error| RefineError::Ml { stage: 'A', component: component_name(k), error })?;
        let core: Vec<usize> = ocsvm_coreset(&model, &pts).into_iter().map(|j| idx[j]).collect();
        if core.is_empty() {
            return Err(RefineError::EmptyCoreset(component_name(k)));
        }
        Ok(core)
    };
    let results: Vec<Result<Vec<usize>, RefineError>> = (0..3).into_par_iter().map(run).collect();
    let mut out: [Vec<usize>; 3] = Default::default();
    for (k, r) in results.into_iter().enumerate() {
        out[k] = r?;
    }
    Ok(out)
}

/// Stage B: every point goes to its nearest plane when closer than the threshold.
pub fn reassign_by_plane(points: &[Vec3], planes: &[Plane; 3], threshold: f64) -> Assignment {
    points
        .iter()
        .map(|p| {
            let mut best: Option<(f64, u8)> = None;
            for (k, plane) in planes.iter().enumerate() {
                let d = plane.signed_distance(p).abs();
                if d < threshold && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, k as u8));
                }
            }
            best.map(|(_, k)| k)
        })
        .collect()
}

/// Stage C: a point of component `i` is dropped when it lies strictly on the
/// other side of plane `j` from component `i`'s coreset centroid.
pub fn cross_filter_halfspaces(
    points: &[Vec3],
    assignment: &Assignment,
    planes: &[Plane; 3],
    centroids: &[Vec3; 3],
) -> Assignment {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| {
            let i = a? as usize;
            for j in (0..3).filter(|&j| j != i) {
                let side_p = planes[j].signed_distance(p);
                let side_c = planes[j].signed_distance(&centroids[i]);
                if side_p * side_c < 0.0 {
                    return None;
                }
            }
            Some(i as u8)
        })
        .collect()
}

/// The two planes of the quadrant test: the vertical plane through the bottom
/// line, and the plane through the bottom edge of the center-ramp plane that
/// is perpendicular to it.
pub fn quadrant_planes(bottom: &Line2, center_plane: &Plane) -> Result<(Plane, Plane), RefineError> {
    let n1 = Vec3::new(bottom.a, bottom.b, 0.0);
    let b1 = Plane { normal: n1, offset: bottom.c };
    let dir = n1.cross(&center_plane.normal);
    if dir.norm() < 1e-9 {
        return Err(RefineError::DegenerateBottomLine);
    }
    let dir = dir.normalize();
    // A point on both planes: the foot of the bottom line closest to the origin, lifted onto the center plane.
    let foot = [-bottom.a * bottom.c, -bottom.b * bottom.c];
    let z = center_plane.z_at(foot[0], foot[1]).ok_or(RefineError::DegenerateBottomLine)?;
    let anchor = Vec3::new(foot[0], foot[1], z);
    let n2 = n1.cross(&dir).normalize();
    Ok((b1, Plane::from_point_normal(&anchor, &n2)))
}

/// Stage D: keep only points in the same quadrant as the center-ramp centroid.
pub fn quadrant_filter(
    points: &[Vec3],
    assignment: &Assignment,
    bottom: &Line2,
    center_plane: &Plane,
    center_centroid: &Vec3,
) -> Result<Assignment, RefineError> {
    let (b1, b2) = quadrant_planes(bottom, center_plane)?;
    let c1 = b1.signed_distance(center_centroid);
    let c2 = b2.signed_distance(center_centroid);
    if c1.abs() < 1e-12 || c2.abs() < 1e-12 {
        return Err(RefineError::AmbiguousQuadrant);
    }
    Ok(points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| {
            a?;
            let keep = b1.signed_distance(p) * c1 >= 0.0 && b2.signed_distance(p) * c2 >= 0.0;
            if keep {
                a
            } else {
                None
            }
        })
        .collect())
}

/// Stage E: drop points whose neighborhood, biased toward their component's
/// coreset centroid, bends away from the component plane.
pub fn normal_consistency_filter(
    points: &[Vec3],
    index: &SpatialIndex,
    assignment: &Assignment,
    planes: &[Plane; 3],
    centroids: &[Vec3; 3],
    params: &RefineParams,
) -> Assignment {
    (0..points.len())
        .into_par_iter()
        .map(|i| {
            let k = assignment[i]? as usize;
            let p = points[i];
            let reach = (p - centroids[k]).norm();
            let nbrs: Vec<Vec3> = index
                .within(&p, params.normal_radius)
                .into_iter()
                .filter(|&j| j != i && (points[j] - centroids[k]).norm() <= reach)
                .map(|j| points[j])
                .collect();
            if nbrs.len() < params.min_neighbors {
                return Some(k as u8);
            }
            let mut support = nbrs;
            support.push(p);
            match fit_plane(&support) {
                Ok(local) if local.normal.dot(&planes[k].normal).abs() >= params.cos_threshold => Some(k as u8),
                Ok(_) => None,
                // A collinear neighborhood carries no normal evidence.
                Err(_) => Some(k as u8),
            }
        })
        .collect()
}

/// Frame with the bottom line's direction as x and its normal as y, centered
/// on `origin`, so stochastic cleanup does not depend on the cloud's heading.
fn ramp_frame(points: &[Vec3], bottom: &Line2, origin: &Vec3) -> Vec<Vec3> {
    let [dx, dy] = bottom.direction();
    let [nx, ny] = bottom.normal();
    points
        .iter()
        .map(|p| {
            let q = p - origin;
            Vec3::new(q.x * dx + q.y * dy, q.x * nx + q.y * ny, q.z)
        })
        .collect()
}

/// Stage F: isolation-forest outliers are dropped, then everything outside
/// the largest density cluster.
pub fn final_cleanup(
    points: &[Vec3],
    assignment: &Assignment,
    bottom: &Line2,
    origin: &Vec3,
    params: &RefineParams,
) -> Result<Assignment, RefineError> {
    let assigned: Vec<usize> = (0..points.len()).filter(|&i| assignment[i].is_some()).collect();
    let mut out = assignment.clone();
    if assigned.len() < 8 {
        return Err(RefineError::EmptyResult("assigned set"));
    }
    let local = ramp_frame(&assigned.iter().map(|&i| points[i]).collect::<Vec<_>>(), bottom, origin);
    let flags = iforest_flag(&local, params.iforest_trees, params.contamination, derive(params.seed, 200))
        .map_err(|error| RefineError::Ml { stage: 'F', component: "assigned set", error })?;
    let kept: Vec<usize> = assigned
        .iter()
        .zip(&flags)
        .filter_map(|(&i, &f)| {
            if f {
                out[i] = None;
                None
            } else {
                Some(i)
            }
        })
        .collect();
    let kept_pts: Vec<Vec3> = kept.iter().map(|&i| points[i]).collect();
    let labels = dbscan(&kept_pts, params.dbscan_eps, params.dbscan_min_pts);
    let main = largest_cluster(&labels);
    for (&i, &l) in kept.iter().zip(&labels) {
        if Some(l) != main {
            out[i] = None;
        }
    }
    for k in 0..3 {
        if !out.iter().any(|&a| a == Some(k as u8)) {
            return Err(RefineError::EmptyResult(component_name(k)));
        }
    }
    Ok(out)
}

fn centroid(points: &[Vec3], idx: &[usize]) -> Vec3 {
    idx.iter().map(|&i| points[i]).sum::<Vec3>() / idx.len() as f64
}

/// Bottom edge of the center ramp, fitted from the input labels: low
/// center-ramp points against unlabeled ground between the two separators.
pub fn input_bottom_line(
    points: &[Vec3],
    input: &Assignment,
    params: &RefineParams,
) -> Result<Line2, RefineError> {
    let pick = |k: usize| indices_of(input, k).into_iter().map(|i| points[i]).collect::<Vec<_>>();
    let (center, left, right) = (pick(0), pick(1), pick(2));
    let xy = |v: &[Vec3]| v.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>();
    let tag = |error| RefineError::Reference { stage: 'D', error };
    let (c2, l2, r2) = (xy(&center), xy(&left), xy(&right));
    let ls = reference::fit_separator(&l2, &c2, params.candidate_cap, derive(params.seed, 300)).map_err(tag)?;
    let rs = reference::fit_separator(&r2, &c2, params.candidate_cap, derive(params.seed, 301)).map_err(tag)?;
    let mean = |v: &[[f64; 2]]| {
        [v.iter().map(|p| p[0]).sum::<f64>() / v.len() as f64, v.iter().map(|p| p[1]).sum::<f64>() / v.len() as f64]
    };
    let (ls, rs) = reference::orient_separators(&ls, &rs, mean(&l2), mean(&r2));
    let unassigned: Vec<Vec3> = (0..points.len()).filter(|&i| input[i].is_none()).map(|i| points[i]).collect();
    reference::fit_bottom_line(&center, &unassigned, &ls, &rs, params.candidate_cap, derive(params.seed, 302))
        .map_err(tag)
}

/// Run stages A through F on one ramp.
pub fn refine_components(cloud: &LabeledCloud, params: &RefineParams) -> Result<RefinedComponents, RefineError> {
    params.validate().map_err(RefineError::InvalidParams)?;
    let merged = merge_warning_surface(cloud)?;
    let input = initial_assignment(&merged);
    for k in 1..3 {
        if !input.iter().any(|&a| a == Some(k as u8)) {
            return Err(RefineError::MissingComponent(component_name(k)));
        }
    }
    let points: Vec<Vec3> = cloud.points.iter().map(|p| p.vec()).collect();
    let mut stages = vec![('A', input.clone())];

    let coresets = extract_coresets(&points, &input, params)?;
    let mut planes = [Plane { normal: Vec3::z(), offset: 0.0 }; 3];
    let mut centroids = [Vec3::zeros(); 3];
    for k in 0..3 {
        let core: Vec<Vec3> = coresets[k].iter().map(|&i| points[i]).collect();
        planes[k] = fit_plane(&core).map_err(|error| RefineError::Ml { stage: 'B', component: component_name(k), error })?;
        centroids[k] = centroid(&points, &coresets[k]);
    }

    let b = reassign_by_plane(&points, &planes, params.plane_threshold);
    stages.push(('B', b.clone()));
    let c = cross_filter_halfspaces(&points, &b, &planes, &centroids);
    stages.push(('C', c.clone()));

    let bottom_line = input_bottom_line(&points, &input, params)?;
    let d = quadrant_filter(&points, &c, &bottom_line, &planes[0], &centroids[0])?;
    stages.push(('D', d.clone()));

    let index = SpatialIndex::new(&points, params.normal_radius);
    let e = normal_consistency_filter(&points, &index, &d, &planes, &centroids, params);
    stages.push(('E', e.clone()));

    let f = final_cleanup(&points, &e, &bottom_line, &centroids[0], params)?;
    stages.push(('F', f.clone()));

    Ok(RefinedComponents { assignment: f, coresets, planes, centroids, bottom_line, stages })
}

/// Write one LPC snapshot per stage as `<stem>.A.lpc` ... `<stem>.F.lpc`.
pub fn dump_stages(dir: &Path, cloud: &LabeledCloud, refined: &RefinedComponents) -> Result<(), CloudError> {
    std::fs::create_dir_all(dir).map_err(|e| CloudError::Io(e))?;
    for (stage, assignment) in &refined.stages {
        let snapshot = relabel(cloud, assignment);
        save_labeled_cloud(&snapshot, &dir.join(format!("{}.{}.lpc", cloud.id, stage)))?;
    }
    Ok(())
}
