//! Labeled point clouds, geometric primitives and the LPC text format.
//!
//! All coordinates are in feet once a cloud has been loaded; `z` is elevation.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Conversion factor from meters to feet.
pub const METERS_TO_FEET: f64 = 3.280_839_895_013_123;
pub const FEET_TO_INCHES: f64 = 12.0;

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("file not found: {0}")]
    MissingFile(String),
    #[error("parse error on line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("label out of range on line {line}: {value}")]
    LabelOutOfRange { line: usize, value: i64 },
    #[error("cloud has no points")]
    EmptyCloud,
    #[error("points and labels differ in length ({points} vs {labels})")]
    LengthMismatch { points: usize, labels: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Normalized return intensity in [0, 1].
    pub intensity: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z, intensity: 0.0 }
    }

    pub fn with_intensity(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self { x, y, z, intensity }
    }

    pub fn from_vec(v: &Vec3) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    #[inline]
    pub fn vec(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    #[inline]
    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (self.vec() - other.vec()).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }
}

/// Per-point component label. The discriminants are the on-disk values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum ComponentLabel {
    Unassigned = 0,
    CenterRamp = 1,
    WarningSurface = 2,
    LeftFlare = 3,
    RightFlare = 4,
    Landing = 5,
    Gutter = 6,
}

impl ComponentLabel {
    pub const ALL: [ComponentLabel; 7] = [
        ComponentLabel::Unassigned,
        ComponentLabel::CenterRamp,
        ComponentLabel::WarningSurface,
        ComponentLabel::LeftFlare,
        ComponentLabel::RightFlare,
        ComponentLabel::Landing,
        ComponentLabel::Gutter,
    ];

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(Self::Unassigned),
            1 => Some(Self::CenterRamp),
            2 => Some(Self::WarningSurface),
            3 => Some(Self::LeftFlare),
            4 => Some(Self::RightFlare),
            5 => Some(Self::Landing),
            6 => Some(Self::Gutter),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for ComponentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Unassigned => "unassigned",
            Self::CenterRamp => "center_ramp",
            Self::WarningSurface => "warning_surface",
            Self::LeftFlare => "left_flare",
            Self::RightFlare => "right_flare",
            Self::Landing => "landing",
            Self::Gutter => "gutter",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCloud {
    pub id: String,
    pub points: Vec<Point3>,
    pub labels: Vec<ComponentLabel>,
}

impl LabeledCloud {
    pub fn new(
        id: impl Into<String>,
        points: Vec<Point3>,
        labels: Vec<ComponentLabel>,
    ) -> Result<Self, CloudError> {
        if points.len() != labels.len() {
            return Err(CloudError::LengthMismatch { points: points.len(), labels: labels.len() });
        }
        if points.is_empty() {
            return Err(CloudError::EmptyCloud);
        }
        Ok(Self { id: id.into(), points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points carrying `label`, in input order. May be empty.
    pub fn subset(&self, label: ComponentLabel) -> LabeledCloud {
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (p, &l) in self.points.iter().zip(&self.labels) {
            if l == label {
                points.push(*p);
                labels.push(l);
            }
        }
        LabeledCloud { id: self.id.clone(), points, labels }
    }

    pub fn indices_of(&self, label: ComponentLabel) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self, label: ComponentLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Apply a rotation about the z axis (degrees, counterclockwise) followed by a translation.
    pub fn transformed(&self, rotation_deg: f64, translation: [f64; 3]) -> LabeledCloud {
        let (s, c) = rotation_deg.to_radians().sin_cos();
        let points = self
            .points
            .iter()
            .map(|p| Point3 {
                x: c * p.x - s * p.y + translation[0],
                y: s * p.x + c * p.y + translation[1],
                z: p.z + translation[2],
                intensity: p.intensity,
            })
            .collect();
        LabeledCloud { id: self.id.clone(), points, labels: self.labels.clone() }
    }
}

/// Load an LPC file, multiplying coordinates by `scale` to obtain feet.
pub fn load_labeled_cloud(path: &Path, scale: f64) -> Result<LabeledCloud, CloudError> {
    if !path.exists() {
        return Err(CloudError::MissingFile(path.display().to_string()));
    }
    let text = fs::read_to_string(path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "ramp".to_string());
    parse_lpc(&text, &id, scale)
}

pub fn parse_lpc(text: &str, id: &str, scale: f64) -> Result<LabeledCloud, CloudError> {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(CloudError::ParseError {
                line: line_no,
                msg: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let mut vals = [0.0f64; 4];
        for (k, field) in fields[..4].iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| CloudError::ParseError {
                line: line_no,
                msg: format!("invalid number '{field}'"),
            })?;
            if !v.is_finite() {
                return Err(CloudError::ParseError {
                    line: line_no,
                    msg: format!("non-finite value '{field}'"),
                });
            }
            vals[k] = v;
        }
        let code: i64 = fields[4].parse().map_err(|_| CloudError::ParseError {
            line: line_no,
            msg: format!("invalid label '{}'", fields[4]),
        })?;
        let label = ComponentLabel::from_code(code)
            .ok_or(CloudError::LabelOutOfRange { line: line_no, value: code })?;
        points.push(Point3::with_intensity(vals[0] * scale, vals[1] * scale, vals[2] * scale, vals[3]));
        labels.push(label);
    }
    if points.is_empty() {
        return Err(CloudError::EmptyCloud);
    }
    normalize_intensity(&mut points);
    LabeledCloud::new(id, points, labels)
}

/// Raw intensities (any value above 1) are min-max scaled into [0, 1].
fn normalize_intensity(points: &mut [Point3]) {
    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.intensity), hi.max(p.intensity))
    });
    if hi > 1.0 {
        let span = hi - lo;
        for p in points.iter_mut() {
            p.intensity = if span > 0.0 { (p.intensity - lo) / span } else { 1.0 };
        }
    } else if lo < 0.0 {
        for p in points.iter_mut() {
            p.intensity = p.intensity.max(0.0);
        }
    }
}

pub fn save_labeled_cloud(cloud: &LabeledCloud, path: &Path) -> Result<(), CloudError> {
    if cloud.points.is_empty() {
        return Err(CloudError::EmptyCloud);
    }
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write_lpc(cloud, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_lpc<W: Write>(cloud: &LabeledCloud, w: &mut W) -> Result<(), CloudError> {
    writeln!(w, "# id {}", cloud.id)?;
    writeln!(w, "# x y z intensity label")?;
    for (p, l) in cloud.points.iter().zip(&cloud.labels) {
        // `{}` on f64 prints the shortest representation that round-trips exactly.
        writeln!(w, "{} {} {} {} {}", p.x, p.y, p.z, p.intensity, l.code())?;
    }
    Ok(())
}

/// A plane `normal · x + offset = 0` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    /// Plane through `point` with the given (not necessarily unit) normal.
    pub fn from_point_normal(point: &Vec3, normal: &Vec3) -> Self {
        let n = normal.normalize();
        Self { normal: n, offset: -n.dot(point) }
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) + self.offset
    }

    /// Height of the plane above (x, y); `None` for vertical planes.
    pub fn z_at(&self, x: f64, y: f64) -> Option<f64> {
        if self.normal.z.abs() < 1e-12 {
            return None;
        }
        Some(-(self.normal.x * x + self.normal.y * y + self.offset) / self.normal.z)
    }

    /// Project a point onto the plane.
    pub fn project(&self, p: &Vec3) -> Vec3 {
        p - self.normal * self.signed_distance(p)
    }
}

/// Implicit 2D line `a x + b y + c = 0`, kept normalized so that `a² + b² = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Line2 {
    /// Normalizes the coefficients; `None` when `(a, b)` is (numerically) zero.
    pub fn new(a: f64, b: f64, c: f64) -> Option<Self> {
        let n = a.hypot(b);
        if !(n > 1e-15) || !c.is_finite() {
            return None;
        }
        Some(Self { a: a / n, b: b / n, c: c / n })
    }

    /// Line through two distinct points. The normal is the direction `q - p` rotated by -90°.
    pub fn through(p: [f64; 2], q: [f64; 2]) -> Option<Self> {
        let a = q[1] - p[1];
        let b = p[0] - q[0];
        Self::new(a, b, -(a * p[0] + b * p[1]))
    }

    #[inline]
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        self.a * p[0] + self.b * p[1] + self.c
    }

    pub fn flipped(&self) -> Self {
        Self { a: -self.a, b: -self.b, c: -self.c }
    }

    pub fn normal(&self) -> [f64; 2] {
        [self.a, self.b]
    }

    /// Unit direction: the normal rotated 90° counterclockwise.
    pub fn direction(&self) -> [f64; 2] {
        [-self.b, self.a]
    }

    pub fn intersect(&self, other: &Line2) -> Option<[f64; 2]> {
        let det = self.a * other.b - other.a * self.b;
        if det.abs() < 1e-12 {
            return None;
        }
        Some([
            (self.b * other.c - other.b * self.c) / det,
            (other.a * self.c - self.a * other.c) / det,
        ])
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }
}

/// Parametric 3D line with a unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line3 {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Line3 {
    pub fn new(origin: Vec3, direction: Vec3) -> Option<Self> {
        let n = direction.norm();
        if !(n > 1e-15) {
            return None;
        }
        Some(Self { origin, direction: direction / n })
    }

    pub fn through(p: &Vec3, q: &Vec3) -> Option<Self> {
        Self::new(*p, q - p)
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    pub fn param_of(&self, p: &Vec3) -> f64 {
        (p - self.origin).dot(&self.direction)
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        let w = p - self.origin;
        (w - self.direction * w.dot(&self.direction)).norm()
    }

    /// Intersection with the vertical plane that contains the 2D line `sep`.
    pub fn intersect_vertical(&self, sep: &Line2) -> Option<Vec3> {
        let denom = sep.a * self.direction.x + sep.b * self.direction.y;
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = -sep.eval([self.origin.x, self.origin.y]) / denom;
        Some(self.at(t))
    }
}

/// Finite 3D segment, used to seed measurement lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment3 {
    pub start: Vec3,
    pub end: Vec3,
}

impl Segment3 {
    pub fn new(start: Vec3, end: Vec3) -> Self {
        Self { start, end }
    }

    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    pub fn point_at(&self, f: f64) -> Vec3 {
        self.start + (self.end - self.start) * f
    }

    pub fn midpoint(&self) -> Vec3 {
        self.point_at(0.5)
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        let d = self.end - self.start;
        let len2 = d.norm_squared();
        if len2 == 0.0 {
            return (p - self.start).norm();
        }
        let t = ((p - self.start).dot(&d) / len2).clamp(0.0, 1.0);
        (p - (self.start + d * t)).norm()
    }
}
