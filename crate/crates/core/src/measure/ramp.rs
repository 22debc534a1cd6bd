use super::lines::{iterative_line_refit, line_slope_percent, quad_reference_lines};
use super::{Feature, MeasureError, MeasureParams, Quad, Reading};
use crate::cloud::{Line3, Segment3, Vec3};
use crate::reference::{RampGeometry, ReferencePoints};

pub(super) fn slope_of(points: &[Vec3], seed: &Segment3, params: &MeasureParams) -> Reading {
    line_slope_percent(&iterative_line_refit(points, seed, params)?.line)
}

/// 3D distance in inches between where `line` meets the vertical planes over `a` and `b`.
pub(super) fn span_inches(line: &Line3, a: &crate::cloud::Line2, b: &crate::cloud::Line2) -> Reading {
    let miss = || MeasureError::DegenerateGeometry("measurement line parallel to a boundary".into());
    let p = line.intersect_vertical(a).ok_or_else(miss)?;
    let q = line.intersect_vertical(b).ok_or_else(miss)?;
    Ok((q - p).norm() * 12.0)
}

/// A1–A3, B1–B3 and C1–C3 from the refined center-ramp points.
pub fn measure_center_ramp(
    center: &[Vec3],
    geometry: &RampGeometry,
    params: &MeasureParams,
) -> Vec<(Feature, usize, Reading)> {
    let r = &geometry.refs;
    let quad = Quad { bl: r.get(1), br: r.get(2), tl: r.get(3), tr: r.get(4) };
    let lines = match quad_reference_lines(&quad, &params.fractions, &params.fractions) {
        Ok(l) => l,
        Err(e) => {
            return [Feature::A, Feature::B, Feature::C]
                .into_iter()
                .flat_map(|f| (0..3).map(move |k| (f, k)))
                .map(|(f, k)| (f, k, Err(e.clone())))
                .collect()
        }
    };
    let mut out = Vec::with_capacity(9);
    for (k, seed) in lines.along.iter().enumerate() {
        out.push((Feature::A, k, slope_of(center, seed, params)));
    }
    let seps = &geometry.separators;
    let mut widths = Vec::with_capacity(3);
    for (k, seed) in lines.across.iter().enumerate() {
        match iterative_line_refit(center, seed, params) {
            Ok(fit) => {
                out.push((Feature::B, k, line_slope_percent(&fit.line)));
                widths.push((Feature::C, k, span_inches(&fit.line, &seps.left, &seps.right)));
            }
            Err(e) => {
                out.push((Feature::B, k, Err(e.clone())));
                widths.push((Feature::C, k, Err(e)));
            }
        }
    }
    out.extend(widths);
    out
}

/// D1 along P1→P5 over the left flare and E1 along P2→P6 over the right flare.
pub fn measure_flares(
    left: &[Vec3],
    right: &[Vec3],
    refs: &ReferencePoints,
    params: &MeasureParams,
) -> Vec<(Feature, usize, Reading)> {
    let d = slope_of(left, &Segment3::new(refs.get(1), refs.get(5)), params);
    let e = slope_of(right, &Segment3::new(refs.get(2), refs.get(6)), params);
    vec![(Feature::D, 0, d), (Feature::E, 0, e)]
}
