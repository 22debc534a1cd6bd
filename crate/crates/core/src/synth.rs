//! Parametric piecewise-planar curb ramps with exact ground truth.
//!
//! Ramps are built in a local frame where `x` runs along the curb, `y` points
//! up the ramp and the ramp's bottom edge lies on `y = 0`. The center ramp
//! rises to the curb height at its top edge; a landing and sidewalk plane sits
//! above it, two triangular flares join the ramp's side edges to the sidewalk,
//! and a gutter strip and road lie below the curb line.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{save_labeled_cloud, CloudError, ComponentLabel, LabeledCloud, Line2, Point3, Vec3};
use crate::measure::{Feature, MeasurementRecord};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RampSpec {
    pub ramp_slope_pct: f64,
    pub cross_slope_pct: f64,
    pub width_in: f64,
    pub left_flare_slope_pct: f64,
    pub right_flare_slope_pct: f64,
    pub landing_depth_ft: f64,
    pub landing_slope_pct: f64,
    pub landing_cross_slope_pct: f64,
    /// Step up at the back of the landing, where it meets a raised walk or planter.
    pub landing_back_step_ft: f64,
    pub gutter_depth_ft: f64,
    pub gutter_slope_pct: f64,
    pub gutter_cross_slope_pct: f64,
    /// Step from the gutter's outer edge down to the road surface.
    pub gutter_lip_ft: f64,
    pub road_cross_slope_pct: f64,
    pub curb_height_ft: f64,
    /// Lean of the ramp's side edges away from perpendicular to the curb.
    pub skew_deg: f64,
    /// Rotation of the top edge relative to the bottom edge.
    pub top_edge_rotation_deg: f64,
    pub density: f64,
    pub noise_sigma_ft: f64,
    pub outlier_fraction: f64,
    pub label_noise_ft: f64,
    pub rotation_deg: f64,
    pub translation: [f64; 3],
    pub seed: u64,
}

impl Default for RampSpec {
    fn default() -> Self {
        Self {
            ramp_slope_pct: 7.0,
            cross_slope_pct: 1.5,
            width_in: 50.0,
            left_flare_slope_pct: 9.0,
            right_flare_slope_pct: 9.0,
            landing_depth_ft: 5.0,
            landing_slope_pct: 1.0,
            landing_cross_slope_pct: 1.2,
            landing_back_step_ft: 0.5,
            gutter_depth_ft: 2.0,
            gutter_slope_pct: 1.0,
            gutter_cross_slope_pct: 4.0,
            gutter_lip_ft: 0.1,
            road_cross_slope_pct: 3.0,
            curb_height_ft: 0.5,
            skew_deg: 0.0,
            top_edge_rotation_deg: 0.0,
            density: 60.0,
            noise_sigma_ft: 2.0 / 304.8,
            outlier_fraction: 0.05,
            label_noise_ft: 0.15,
            rotation_deg: 0.0,
            translation: [0.0; 3],
            seed: 0,
        }
    }
}

impl RampSpec {
    /// Same geometry with every source of noise removed.
    pub fn noise_free(mut self) -> Self {
        self.noise_sigma_ft = 0.0;
        self.outlier_fraction = 0.0;
        self.label_noise_ft = 0.0;
        self
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        let slopes = [
            ("ramp_slope_pct", self.ramp_slope_pct),
            ("cross_slope_pct", self.cross_slope_pct),
            ("left_flare_slope_pct", self.left_flare_slope_pct),
            ("right_flare_slope_pct", self.right_flare_slope_pct),
            ("landing_slope_pct", self.landing_slope_pct),
            ("landing_cross_slope_pct", self.landing_cross_slope_pct),
            ("gutter_slope_pct", self.gutter_slope_pct),
            ("gutter_cross_slope_pct", self.gutter_cross_slope_pct),
            ("road_cross_slope_pct", self.road_cross_slope_pct),
        ];
        for (name, v) in slopes {
            if !(v.abs() <= 50.0) {
                return bad(format!("{name} = {v} outside ±50%"));
            }
        }
        if !(self.ramp_slope_pct >= 0.5) {
            return bad(format!("ramp_slope_pct = {} must be at least 0.5", self.ramp_slope_pct));
        }
        for (name, v) in [
            ("width_in", self.width_in),
            ("landing_depth_ft", self.landing_depth_ft),
            ("gutter_depth_ft", self.gutter_depth_ft),
            ("curb_height_ft", self.curb_height_ft),
            ("density", self.density),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be positive"));
            }
        }
        for (name, v) in [("outlier_fraction", self.outlier_fraction)] {
            if !(0.0..=0.3).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 0.3]"));
            }
        }
        for (name, v) in [
            ("noise_sigma_ft", self.noise_sigma_ft),
            ("label_noise_ft", self.label_noise_ft),
            ("landing_back_step_ft", self.landing_back_step_ft),
            ("gutter_lip_ft", self.gutter_lip_ft),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be non-negative"));
            }
        }
        if !(self.skew_deg.abs() < 45.0 && self.top_edge_rotation_deg.abs() < 45.0) {
            return bad("skew and top-edge rotation must stay below 45°".into());
        }
        if !(self.rotation_deg.is_finite() && self.translation.iter().all(|t| t.is_finite())) {
            return bad("rigid transform must be finite".into());
        }
        Ok(())
    }
}

/// Exact description of a generated ramp, in world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub id: String,
    pub spec: RampSpec,
    /// Analytic feature values (all sub-measurements of a feature share one value).
    pub record: MeasurementRecord,
    /// P1..P6: bottom-left, bottom-right, top-left, top-right, left flare outer, right flare outer.
    pub corners: [[f64; 3]; 6],
    pub left_separator: Line2,
    pub right_separator: Line2,
    pub bottom_line: Line2,
    /// Outward unit normals (z up) of the center ramp, left flare and right flare planes.
    pub plane_normals: [[f64; 3]; 3],
    /// True surface membership per point; off-surface outliers are `Unassigned`.
    pub membership: Vec<ComponentLabel>,
}

impl GroundTruth {
    pub fn feature(&self, f: Feature) -> f64 {
        self.record.get(f, 0).expect("ground truth is always complete")
    }
}

/// Analytic surface of one spec in the local frame.
struct Scene {
    s: f64,
    c: f64,
    tan_skew: f64,
    tan_top: f64,
    lr: f64,
    half_w: f64,
    p: [[f64; 2]; 6],
    z_corner: [f64; 6],
    sidewalk: [f64; 3],
    left_flare: [f64; 3],
    right_flare: [f64; 3],
    landing_depth: f64,
    back_step: f64,
    gutter_depth: f64,
    f: f64,
    g: f64,
    lip: f64,
    r: f64,
    bounds: [f64; 4],
}

/// Plane `z = k0 + kx x + ky y` through three points.
fn plane_through(p: [[f64; 3]; 3]) -> Option<[f64; 3]> {
    let m = nalgebra::Matrix3::new(1.0, p[0][0], p[0][1], 1.0, p[1][0], p[1][1], 1.0, p[2][0], p[2][1]);
    let z = nalgebra::Vector3::new(p[0][2], p[1][2], p[2][2]);
    let k = m.lu().solve(&z)?;
    Some([k[0], k[1], k[2]])
}

fn eval_plane(k: &[f64; 3], x: f64, y: f64) -> f64 {
    k[0] + k[1] * x + k[2] * y
}

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn in_triangle(q: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    let d1 = cross2(a, b, q);
    let d2 = cross2(b, c, q);
    let d3 = cross2(c, a, q);
    let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(neg && pos)
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Region {
    Center,
    Warning,
    LeftFlare,
    RightFlare,
    Landing,
    Sidewalk,
    BackSidewalk,
    Gutter,
    Road,
}

impl Region {
    fn label(self) -> ComponentLabel {
        match self {
            Region::Center => ComponentLabel::CenterRamp,
            Region::Warning => ComponentLabel::WarningSurface,
            Region::LeftFlare => ComponentLabel::LeftFlare,
            Region::RightFlare => ComponentLabel::RightFlare,
            Region::Landing => ComponentLabel::Landing,
            Region::Gutter => ComponentLabel::Gutter,
            Region::Sidewalk | Region::BackSidewalk | Region::Road => ComponentLabel::Unassigned,
        }
    }

    fn intensity(self) -> f64 {
        match self {
            Region::Warning => 0.85,
            Region::Road => 0.25,
            Region::Gutter => 0.5,
            _ => 0.6,
        }
    }
}

impl Scene {
    fn new(spec: &RampSpec) -> Result<Self, SynthError> {
        let s = spec.ramp_slope_pct / 100.0;
        let c = spec.cross_slope_pct / 100.0;
        let h = spec.curb_height_ft;
        let half_w = spec.width_in / 24.0;
        let lr = h / s;
        let tan_skew = spec.skew_deg.to_radians().tan();
        let tan_top = spec.top_edge_rotation_deg.to_radians().tan();
        // Top edge passes through the sheared top midpoint with slope tan_top.
        let y_top = |x: f64| lr + tan_top * (x - tan_skew * lr);
        // Side edge x = x0 + tan_skew * y meets the top edge.
        let side_top = |x0: f64| {
            let y = (lr + tan_top * (x0 - tan_skew * lr)) / (1.0 - tan_top * tan_skew);
            [x0 + tan_skew * y, y]
        };
        let p1 = [-half_w, 0.0];
        let p2 = [half_w, 0.0];
        let p3 = side_top(-half_w);
        let p4 = side_top(half_w);
        let zc = |q: [f64; 2]| s * q[1] + c * q[0];

        let i = spec.landing_cross_slope_pct / 100.0;
        let j = spec.landing_slope_pct / 100.0;
        // z = h + i x + j (y - y_top(x)) + s (y_top(x) - lr), which is planar.
        let ky = j;
        let kx = i + (s - j) * tan_top;
        let k0 = h - j * lr - (s - j) * tan_top * tan_skew * lr;
        let sidewalk = [k0, kx, ky];
        debug_assert!((eval_plane(&sidewalk, 0.3, y_top(0.3)) - (h + i * 0.3 + s * (y_top(0.3) - lr))).abs() < 1e-9);

        let d_left = spec.left_flare_slope_pct / 100.0;
        let d_right = spec.right_flare_slope_pct / 100.0;
        let fw_left = (k0 + kx * p1[0] - zc(p1)) / (d_left + kx);
        let fw_right = (k0 + kx * p2[0] - zc(p2)) / (d_right - kx);
        if !(fw_left > 0.05 && fw_left < 50.0 && fw_right > 0.05 && fw_right < 50.0) {
            return Err(SynthError::InvalidSpec(format!(
                "flare widths {fw_left:.3} / {fw_right:.3} ft are not realizable"
            )));
        }
        let p5 = [p1[0] - fw_left, 0.0];
        let p6 = [p2[0] + fw_right, 0.0];
        let p = [p1, p2, p3, p4, p5, p6];
        let z_corner = [
            zc(p1),
            zc(p2),
            zc(p3),
            zc(p4),
            eval_plane(&sidewalk, p5[0], p5[1]),
            eval_plane(&sidewalk, p6[0], p6[1]),
        ];
        let lift = |k: usize| [p[k][0], p[k][1], z_corner[k]];
        let left_flare = plane_through([lift(0), lift(2), lift(4)])
            .ok_or_else(|| SynthError::InvalidSpec("degenerate left flare".into()))?;
        let right_flare = plane_through([lift(1), lift(3), lift(5)])
            .ok_or_else(|| SynthError::InvalidSpec("degenerate right flare".into()))?;

        let gutter_depth = spec.gutter_depth_ft;
        let road_depth = (2.0 * gutter_depth + 1.5).max(4.0);
        let apron = 2.0;
        let y_top_max = p3[1].max(p4[1]);
        let bounds = [
            p5[0].min(p3[0]) - apron,
            p6[0].max(p4[0]) + apron,
            -gutter_depth - road_depth,
            y_top_max + spec.landing_depth_ft + 3.0,
        ];
        Ok(Self {
            s,
            c,
            tan_skew,
            tan_top,
            lr,
            half_w,
            p,
            z_corner,
            sidewalk,
            left_flare,
            right_flare,
            landing_depth: spec.landing_depth_ft,
            back_step: spec.landing_back_step_ft,
            gutter_depth,
            f: spec.gutter_slope_pct / 100.0,
            g: spec.gutter_cross_slope_pct / 100.0,
            lip: spec.gutter_lip_ft,
            r: spec.road_cross_slope_pct / 100.0,
            bounds,
        })
    }

    fn y_top(&self, x: f64) -> f64 {
        self.lr + self.tan_top * (x - self.tan_skew * self.lr)
    }

    fn in_center(&self, q: [f64; 2]) -> bool {
        let [p1, p2, p3, p4, ..] = self.p;
        q[1] >= 0.0
            && cross2(p1, p2, q) >= 0.0
            && cross2(p2, p4, q) >= 0.0
            && cross2(p4, p3, q) > 0.0
            && cross2(p3, p1, q) >= 0.0
    }

    fn region(&self, q: [f64; 2]) -> Region {
        let [x, y] = q;
        if y < 0.0 {
            let in_strip = x >= self.p[4][0] && x <= self.p[5][0];
            return if y >= -self.gutter_depth {
                if in_strip {
                    Region::Gutter
                } else {
                    Region::Road
                }
            } else {
                Region::Road
            };
        }
        if self.in_center(q) {
            let warning_depth = (self.lr * 0.3).min(2.0);
            return if y < warning_depth { Region::Warning } else { Region::Center };
        }
        if in_triangle(q, self.p[0], self.p[2], self.p[4]) {
            return Region::LeftFlare;
        }
        if in_triangle(q, self.p[1], self.p[3], self.p[5]) {
            return Region::RightFlare;
        }
        let yt = self.y_top(x);
        if y >= yt + self.landing_depth {
            Region::BackSidewalk
        } else if y >= yt && x >= self.p[2][0] && x <= self.p[3][0] {
            Region::Landing
        } else {
            Region::Sidewalk
        }
    }

    fn z(&self, region: Region, q: [f64; 2]) -> f64 {
        let [x, y] = q;
        match region {
            Region::Center | Region::Warning => self.s * y + self.c * x,
            Region::LeftFlare => eval_plane(&self.left_flare, x, y),
            Region::RightFlare => eval_plane(&self.right_flare, x, y),
            Region::Landing | Region::Sidewalk => eval_plane(&self.sidewalk, x, y),
            Region::BackSidewalk => eval_plane(&self.sidewalk, x, y) + self.back_step,
            Region::Gutter => self.gutter_z(x, y),
            Region::Road => {
                if y >= -self.gutter_depth {
                    self.gutter_z(x, y)
                } else {
                    self.f * x + self.g * self.gutter_depth - self.lip + self.r * (-y - self.gutter_depth)
                }
            }
        }
    }

    fn gutter_z(&self, x: f64, y: f64) -> f64 {
        self.f * x - self.g * y
    }

    /// Height of the surface just above the curb line at `x`.
    fn curb_top(&self, x: f64) -> f64 {
        let q = [x, 0.0];
        self.z(self.region(q), q)
    }
}

fn hash_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Build one ramp cloud and its ground truth.
pub fn generate(spec: &RampSpec) -> Result<(LabeledCloud, GroundTruth), SynthError> {
    generate_named(spec, &format!("ramp_{:04}", spec.seed))
}

pub fn generate_named(spec: &RampSpec, id: &str) -> Result<(LabeledCloud, GroundTruth), SynthError> {
    spec.validate()?;
    let scene = Scene::new(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hash_seed(spec.seed, 1));
    let [x0, x1, y0, y1] = scene.bounds;

    let mut local: Vec<([f64; 3], Region)> = Vec::new();
    let area = (x1 - x0) * (y1 - y0);
    let n_ground = (spec.density * area).round() as usize;
    for _ in 0..n_ground {
        let q = [rng.random_range(x0..x1), rng.random_range(y0..y1)];
        let region = scene.region(q);
        local.push(([q[0], q[1], scene.z(region, q)], region));
    }
    // Vertical curb face along y = 0 wherever the surface above the curb line sits above the gutter.
    let n_curb = (spec.density * (x1 - x0) * spec.curb_height_ft).round() as usize;
    for _ in 0..n_curb {
        let x = rng.random_range(x0..x1);
        let lo = scene.gutter_z(x, 0.0);
        let hi = scene.curb_top(x);
        let height = hi - lo;
        // Rejection keeps the face density uniform per unit face area.
        if height > 0.01 && rng.random_range(0.0..spec.curb_height_ft.max(height)) < height {
            let z = rng.random_range(lo..hi);
            local.push(([x, 0.0, z], Region::Road));
        }
    }

    let noise = Normal::new(0.0, spec.noise_sigma_ft.max(0.0)).unwrap();
    let mut points = Vec::with_capacity(local.len());
    let mut labels = Vec::with_capacity(local.len());
    let mut membership = Vec::with_capacity(local.len());
    for &([x, y, z], region) in &local {
        let mut z = z;
        if spec.noise_sigma_ft > 0.0 {
            z += noise.sample(&mut rng);
        }
        let mut truth = region.label();
        if spec.outlier_fraction > 0.0 && rng.random_bool(spec.outlier_fraction) {
            let magnitude = rng.random_range(0.2..2.0);
            z += if rng.random_bool(0.5) { magnitude } else { -magnitude };
            truth = ComponentLabel::Unassigned;
        }
        let mut label = region.label();
        if spec.label_noise_ft > 0.0 {
            let r = spec.label_noise_ft * rng.random_range(0.0f64..1.0).sqrt();
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            label = scene.region([x + r * a.cos(), y + r * a.sin()]).label();
        }
        points.push(Point3::with_intensity(x, y, z, region.intensity()));
        labels.push(label);
        membership.push(truth);
    }

    let local_cloud = LabeledCloud::new(id, points, labels)?;
    let cloud = local_cloud.transformed(spec.rotation_deg, spec.translation);

    let (sn, cs) = spec.rotation_deg.to_radians().sin_cos();
    let t = spec.translation;
    let world = |p: [f64; 2], z: f64| [cs * p[0] - sn * p[1] + t[0], sn * p[0] + cs * p[1] + t[1], z + t[2]];
    let mut corners = [[0.0; 3]; 6];
    for k in 0..6 {
        corners[k] = world(scene.p[k], scene.z_corner[k]);
    }
    let xy = |k: usize| [corners[k][0], corners[k][1]];
    let centroid2 = |ks: &[usize]| {
        let n = ks.len() as f64;
        [ks.iter().map(|&k| corners[k][0]).sum::<f64>() / n, ks.iter().map(|&k| corners[k][1]).sum::<f64>() / n]
    };
    let orient = |line: Line2, probe: [f64; 2], want_positive: bool| {
        if (line.eval(probe) > 0.0) == want_positive {
            line
        } else {
            line.flipped()
        }
    };
    let left_separator = orient(Line2::through(xy(0), xy(2)).unwrap(), centroid2(&[0, 2, 4]), false);
    let right_separator = orient(Line2::through(xy(1), xy(3)).unwrap(), centroid2(&[1, 3, 5]), true);
    let bottom_line = orient(Line2::through(xy(0), xy(1)).unwrap(), centroid2(&[0, 1, 2, 3]), true);

    let rot_normal = |kx: f64, ky: f64| {
        let n = Vec3::new(-kx, -ky, 1.0).normalize();
        [cs * n.x - sn * n.y, sn * n.x + cs * n.y, n.z]
    };
    let plane_normals = [
        rot_normal(scene.c, scene.s),
        rot_normal(scene.left_flare[1], scene.left_flare[2]),
        rot_normal(scene.right_flare[1], scene.right_flare[2]),
    ];

    let landing_width_in = (scene.p[3][0] - scene.p[2][0]).abs() * 12.0;
    let record = MeasurementRecord::uniform(|f| match f {
        Feature::A => spec.ramp_slope_pct.abs(),
        Feature::B => spec.cross_slope_pct.abs(),
        Feature::C => spec.width_in,
        Feature::D => spec.left_flare_slope_pct.abs(),
        Feature::E => spec.right_flare_slope_pct.abs(),
        Feature::F => spec.gutter_slope_pct.abs(),
        Feature::G => spec.gutter_cross_slope_pct.abs(),
        Feature::H => spec.road_cross_slope_pct.abs(),
        Feature::I => spec.landing_cross_slope_pct.abs(),
        Feature::J => spec.landing_slope_pct.abs(),
        Feature::K => landing_width_in,
        Feature::L => spec.landing_depth_ft * 12.0,
    });
    debug_assert!(scene.half_w > 0.0);

    let truth = GroundTruth {
        id: id.to_string(),
        spec: spec.clone(),
        record,
        corners,
        left_separator,
        right_separator,
        bottom_line,
        plane_normals,
        membership,
    };
    Ok((cloud, truth))
}

/// Closed interval a spec parameter is drawn from.
pub type Range = (f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpecRanges {
    pub ramp_slope_pct: Range,
    pub cross_slope_pct: Range,
    pub width_in: Range,
    pub flare_slope_pct: Range,
    pub landing_depth_ft: Range,
    pub landing_slope_pct: Range,
    pub landing_cross_slope_pct: Range,
    pub gutter_depth_ft: Range,
    pub gutter_slope_pct: Range,
    pub gutter_cross_slope_pct: Range,
    pub road_cross_slope_pct: Range,
    pub curb_height_ft: Range,
    pub rotation_deg: Range,
    pub translation_ft: Range,
    /// Randomly mirror the along-curb slopes: one flip for the ramp and
    /// landing cross slopes together, another for the gutter.
    pub random_signs: bool,
    /// Noise, density and shape settings shared by every ramp.
    pub base: RampSpec,
}

impl Default for SpecRanges {
    fn default() -> Self {
        Self {
            ramp_slope_pct: (5.0, 7.5),
            cross_slope_pct: (0.5, 1.7),
            width_in: (50.0, 60.0),
            flare_slope_pct: (6.0, 9.2),
            landing_depth_ft: (4.5, 6.0),
            landing_slope_pct: (0.3, 1.5),
            landing_cross_slope_pct: (0.3, 1.5),
            gutter_depth_ft: (1.5, 2.5),
            gutter_slope_pct: (0.3, 1.5),
            gutter_cross_slope_pct: (2.0, 5.0),
            road_cross_slope_pct: (1.5, 4.5),
            curb_height_ft: (0.4, 0.6),
            rotation_deg: (0.0, 360.0),
            translation_ft: (-500.0, 500.0),
            random_signs: true,
            base: RampSpec::default(),
        }
    }
}

impl SpecRanges {
    /// Every range collapsed onto the given spec's values.
    pub fn fixed(spec: &RampSpec) -> Self {
        let p = |v: f64| (v, v);
        Self {
            ramp_slope_pct: p(spec.ramp_slope_pct),
            cross_slope_pct: p(spec.cross_slope_pct),
            width_in: p(spec.width_in),
            flare_slope_pct: p(spec.left_flare_slope_pct),
            landing_depth_ft: p(spec.landing_depth_ft),
            landing_slope_pct: p(spec.landing_slope_pct),
            landing_cross_slope_pct: p(spec.landing_cross_slope_pct),
            gutter_depth_ft: p(spec.gutter_depth_ft),
            gutter_slope_pct: p(spec.gutter_slope_pct),
            gutter_cross_slope_pct: p(spec.gutter_cross_slope_pct),
            road_cross_slope_pct: p(spec.road_cross_slope_pct),
            curb_height_ft: p(spec.curb_height_ft),
            rotation_deg: p(spec.rotation_deg),
            translation_ft: p(0.0),
            random_signs: false,
            base: spec.clone(),
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        for (name, (lo, hi)) in [
            ("ramp_slope_pct", self.ramp_slope_pct),
            ("cross_slope_pct", self.cross_slope_pct),
            ("width_in", self.width_in),
            ("flare_slope_pct", self.flare_slope_pct),
            ("landing_depth_ft", self.landing_depth_ft),
            ("landing_slope_pct", self.landing_slope_pct),
            ("landing_cross_slope_pct", self.landing_cross_slope_pct),
            ("gutter_depth_ft", self.gutter_depth_ft),
            ("gutter_slope_pct", self.gutter_slope_pct),
            ("gutter_cross_slope_pct", self.gutter_cross_slope_pct),
            ("road_cross_slope_pct", self.road_cross_slope_pct),
            ("curb_height_ft", self.curb_height_ft),
            ("rotation_deg", self.rotation_deg),
            ("translation_ft", self.translation_ft),
        ] {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(SynthError::InvalidSpec(format!("range {name} = [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }

    /// Draw the `index`-th spec of a corpus.
    pub fn sample(&self, seed: u64, index: usize) -> RampSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(hash_seed(seed, index as u64 + 1000));
        let mut draw = |r: Range| if r.0 == r.1 { r.0 } else { rng.random_range(r.0..=r.1) };
        let flare = self.flare_slope_pct;
        let mut spec = RampSpec {
            ramp_slope_pct: draw(self.ramp_slope_pct),
            cross_slope_pct: draw(self.cross_slope_pct),
            width_in: draw(self.width_in),
            left_flare_slope_pct: draw(flare),
            right_flare_slope_pct: draw(flare),
            landing_depth_ft: draw(self.landing_depth_ft),
            landing_slope_pct: draw(self.landing_slope_pct),
            landing_cross_slope_pct: draw(self.landing_cross_slope_pct),
            gutter_depth_ft: draw(self.gutter_depth_ft),
            gutter_slope_pct: draw(self.gutter_slope_pct),
            gutter_cross_slope_pct: draw(self.gutter_cross_slope_pct),
            road_cross_slope_pct: draw(self.road_cross_slope_pct),
            curb_height_ft: draw(self.curb_height_ft),
            rotation_deg: draw(self.rotation_deg),
            translation: [draw(self.translation_ft), draw(self.translation_ft), draw(self.translation_ft) * 0.1],
            seed: hash_seed(seed, index as u64),
            ..self.base.clone()
        };
        if self.random_signs {
            // Ramp and landing cross slopes share a sign, as they do on a
            // sidewalk that falls one way along the curb.
            if rng.random_bool(0.5) {
                spec.cross_slope_pct = -spec.cross_slope_pct;
                spec.landing_cross_slope_pct = -spec.landing_cross_slope_pct;
            }
            if rng.random_bool(0.5) {
                spec.gutter_slope_pct = -spec.gutter_slope_pct;
            }
        }
        spec
    }
}

/// A deterministic corpus of `n` ramps named `ramp_000`, `ramp_001`, ...
pub fn corpus(seed: u64, n: usize, ranges: &SpecRanges) -> Result<Vec<(LabeledCloud, GroundTruth)>, SynthError> {
    ranges.validate()?;
    if n == 0 {
        return Err(SynthError::InvalidSpec("corpus size must be at least 1".into()));
    }
    (0..n)
        .into_par_iter()
        .map(|k| generate_named(&ranges.sample(seed, k), &format!("ramp_{k:03}")))
        .collect()
}

/// Writes `<id>.lpc` and `<id>.truth.json` into `dir`.
pub fn write_ramp(dir: &Path, cloud: &LabeledCloud, truth: &GroundTruth) -> Result<(), SynthError> {
    std::fs::create_dir_all(dir)?;
    save_labeled_cloud(cloud, &dir.join(format!("{}.lpc", cloud.id)))?;
    let file = std::fs::File::create(dir.join(format!("{}.truth.json", cloud.id)))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), truth)?;
    Ok(())
}
