//! Landing, gutter and road regions found by walking outward from the ramp
//! corners until the surface grade changes abruptly.

use serde::Serialize;

use super::lines::{iterative_line_refit, line_slope_percent, quad_reference_lines};
use super::ramp::span_inches;
use super::{Feature, MeasureError, MeasureParams, Quad, Reading};
use crate::cloud::{LabeledCloud, Line2, Vec3};
use crate::mlkit::{point_in_convex_polygon, SpatialIndex};
use crate::reference::ReferencePoints;

/// Surface height lookups over the whole cloud.
#[derive(Debug, Clone)]
pub struct SurfaceProbe {
    points: Vec<Vec3>,
    index: SpatialIndex,
    radius: f64,
    min_points: usize,
}

impl SurfaceProbe {
    pub fn new(cloud: &LabeledCloud, radius: f64, min_points: usize) -> Self {
        let points: Vec<Vec3> = cloud.points.iter().map(|p| p.vec()).collect();
        Self::from_vecs(points, radius, min_points)
    }

    pub fn from_vecs(points: Vec<Vec3>, radius: f64, min_points: usize) -> Self {
        let index = SpatialIndex::planar(&points, radius.max(0.05));
        Self { points, index, radius, min_points: min_points.max(1) }
    }

    /// Median height of the points in a vertical cylinder around `(x, y)`,
    /// or `None` when the cylinder holds fewer than the minimum count.
    pub fn surface_z(&self, x: f64, y: f64) -> Option<f64> {
        let mut z: Vec<f64> =
            self.index.within(&Vec3::new(x, y, 0.0), self.radius).into_iter().map(|i| self.points[i].z).collect();
        if z.len() < self.min_points {
            return None;
        }
        z.sort_by(f64::total_cmp);
        let m = z.len() / 2;
        Some(if z.len() % 2 == 1 { z[m] } else { 0.5 * (z[m - 1] + z[m]) })
    }

    /// Every point whose planar position lies inside the quad.
    pub fn points_in(&self, quad: &Quad) -> Result<Vec<Vec3>, MeasureError> {
        let poly = quad.polygon()?;
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &poly {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let center = Vec3::new(0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.0);
        let reach = 0.5 * (hi[0] - lo[0]).hypot(hi[1] - lo[1]);
        Ok(self
            .index
            .within(&center, reach)
            .into_iter()
            .map(|i| self.points[i])
            .filter(|p| point_in_convex_polygon(&poly, [p.x, p.y]))
            .collect())
    }

    fn lift(&self, x: f64, y: f64) -> Option<Vec3> {
        self.surface_z(x, y).map(|z| Vec3::new(x, y, z))
    }
}

/// Where the walk along one edge stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeSearch {
    /// Last surface point before the grade change (or at the maximum extension).
    #[serde(serialize_with = "ser_vec")]
    pub end: Vec3,
    /// Horizontal distance from the corner to `end` (ft).
    pub distance: f64,
    /// First step past the grade change; `None` when the walk ran out.
    #[serde(serialize_with = "ser_opt_vec")]
    pub beyond: Option<Vec3>,
}

fn ser_vec<S: serde::Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
    [v.x, v.y, v.z].serialize(s)
}

fn ser_opt_vec<S: serde::Serializer>(v: &Option<Vec3>, s: S) -> Result<S::Ok, S::Error> {
    v.map(|v| [v.x, v.y, v.z]).serialize(s)
}

impl EdgeSearch {
    pub fn exhausted(&self) -> bool {
        self.beyond.is_none()
    }
}

/// Walk from `corner` along the planar unit direction `dir` in fixed steps,
/// reading the surface height at each step. The chord grade from the corner
/// to each step is compared with the grade at the previous step; the walk
/// stops at the last step before a change larger than the slope-jump
/// threshold that is still present at the following reading. Steps whose
/// cylinder holds too few points are skipped. Grades are only compared once
/// the step is at least the minimum monitoring distance from the corner,
/// where height noise no longer dominates the chord.
pub fn extend_edge(
    probe: &SurfaceProbe,
    corner: &Vec3,
    dir: [f64; 2],
    params: &MeasureParams,
) -> Result<EdgeSearch, MeasureError> {
    // The corner is a cloud point, so its own height stands in when its cylinder is sparse.
    let base = probe.lift(corner.x, corner.y).unwrap_or(*corner);
    let corner = [corner.x, corner.y];
    let steps = (params.max_extension_ft / params.step_ft + 1e-9).floor() as usize;
    // (point, distance, chord grade when monitored)
    let mut readings: Vec<(Vec3, f64, Option<f64>)> = Vec::new();
    let mut first_empty = None;
    for k in 1..=steps {
        let d = k as f64 * params.step_ft;
        let Some(q) = probe.lift(corner[0] + dir[0] * d, corner[1] + dir[1] * d) else {
            first_empty.get_or_insert(k);
            continue;
        };
        let grade = (d + 1e-9 >= params.min_monitor_ft).then(|| 100.0 * (q.z - base.z) / d);
        readings.push((q, d, grade));
    }
    let graded: Vec<usize> = (0..readings.len()).filter(|&i| readings[i].2.is_some()).collect();
    let g = |i: usize| readings[i].2.unwrap();
    let mut prev: Option<usize> = None;
    for (j, &cur) in graded.iter().enumerate() {
        let Some(p) = prev else {
            prev = Some(cur);
            continue;
        };
        if (g(cur) - g(p)).abs() > params.slope_jump_pct {
            // A lone noisy reading recovers at the next step; a real edge does not.
            let persists = graded.get(j + 1).map_or(true, |&n| (g(n) - g(p)).abs() > params.slope_jump_pct);
            if persists {
                let (end, distance, _) = readings[cur - 1];
                return Ok(EdgeSearch { end, distance, beyond: Some(readings[cur].0) });
            }
            continue;
        }
        prev = Some(cur);
    }
    match readings.last() {
        Some(&(end, distance, _)) => Ok(EdgeSearch { end, distance, beyond: None }),
        None => Err(MeasureError::NoSurfacePoints { step: first_empty.unwrap_or(1) }),
    }
}

/// An approximated landing or gutter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionQuad {
    pub quad: Quad,
    pub left: EdgeSearch,
    pub right: EdgeSearch,
    /// Either walk reached the maximum extension without a grade change.
    pub exhausted: bool,
}

fn unit(from: &Vec3, to: &Vec3) -> Result<[f64; 2], MeasureError> {
    let (dx, dy) = (to.x - from.x, to.y - from.y);
    let n = dx.hypot(dy);
    if !(n > 1e-9) {
        return Err(MeasureError::DegenerateGeometry("ramp side edge has zero length".into()));
    }
    Ok([dx / n, dy / n])
}

fn region_from(
    probe: &SurfaceProbe,
    near_left: &Vec3,
    near_right: &Vec3,
    dirs: [[f64; 2]; 2],
    params: &MeasureParams,
) -> Result<RegionQuad, MeasureError> {
    let left = extend_edge(probe, near_left, dirs[0], params)?;
    let right = extend_edge(probe, near_right, dirs[1], params)?;
    let corner = |v: &Vec3| probe.lift(v.x, v.y).unwrap_or(*v);
    let quad = Quad { bl: corner(near_left), br: corner(near_right), tl: left.end, tr: right.end };
    quad.polygon()?;
    Ok(RegionQuad { quad, exhausted: left.exhausted() || right.exhausted(), left, right })
}

/// Landing beyond the top edge: walk from P3 along P1→P3 and from P4 along P2→P4.
pub fn approximate_landing(
    probe: &SurfaceProbe,
    refs: &ReferencePoints,
    params: &MeasureParams,
) -> Result<RegionQuad, MeasureError> {
    let dirs = [unit(&refs.get(1), &refs.get(3))?, unit(&refs.get(2), &refs.get(4))?];
    region_from(probe, &refs.get(3), &refs.get(4), dirs, params)
}

/// Gutter beyond the bottom edge: walk from P1 along P3→P1 and from P2 along P4→P2.
pub fn approximate_gutter(
    probe: &SurfaceProbe,
    refs: &ReferencePoints,
    params: &MeasureParams,
) -> Result<RegionQuad, MeasureError> {
    let dirs = [unit(&refs.get(3), &refs.get(1))?, unit(&refs.get(4), &refs.get(2))?];
    region_from(probe, &refs.get(1), &refs.get(2), dirs, params)
}

/// Road band of the gutter's depth, starting at the first step past the gutter edge.
pub fn road_band(probe: &SurfaceProbe, gutter: &RegionQuad) -> Result<Quad, MeasureError> {
    if gutter.exhausted {
        return Err(MeasureError::NoSurfacePoints { step: 0 });
    }
    let side = |near: &Vec3, search: &EdgeSearch| -> Result<(Vec3, Vec3), MeasureError> {
        let start = search.beyond.expect("checked above");
        let dir = unit(near, &search.end)?;
        let depth = search.distance;
        let far = [start.x + dir[0] * depth, start.y + dir[1] * depth];
        let end = probe.lift(far[0], far[1]).unwrap_or(Vec3::new(far[0], far[1], start.z));
        Ok((start, end))
    };
    let (bl, tl) = side(&gutter.quad.bl, &gutter.left)?;
    let (br, tr) = side(&gutter.quad.br, &gutter.right)?;
    let quad = Quad { bl, br, tl, tr };
    quad.polygon()?;
    Ok(quad)
}

fn edge_line(a: &Vec3, b: &Vec3) -> Result<Line2, MeasureError> {
    Line2::through([a.x, a.y], [b.x, b.y]).ok_or_else(|| MeasureError::DegenerateGeometry("quad edge".into()))
}

fn fail(features: &[(Feature, usize)], e: &MeasureError) -> Vec<(Feature, usize, Reading)> {
    features.iter().map(|&(f, k)| (f, k, Err(e.clone()))).collect()
}

fn subs(f: Feature) -> impl Iterator<Item = (Feature, usize)> {
    (0..f.sub_count()).map(move |k| (f, k))
}

/// I1–I3 (cross slope, parallel to the curb), J1–J3 (slope, away from the
/// curb), K1–K3 (width between the quad's sides) and L1–L3 (depth between
/// its near and far edges).
pub fn measure_landing(probe: &SurfaceProbe, quad: &Quad, params: &MeasureParams) -> Vec<(Feature, usize, Reading)> {
    let all: Vec<(Feature, usize)> = [Feature::I, Feature::J, Feature::K, Feature::L].into_iter().flat_map(subs).collect();
    let setup = || -> Result<_, MeasureError> {
        let lines = quad_reference_lines(quad, &params.fractions, &params.fractions)?;
        let region = probe.points_in(quad)?;
        let sides = (edge_line(&quad.bl, &quad.tl)?, edge_line(&quad.br, &quad.tr)?);
        let ends = (edge_line(&quad.bl, &quad.br)?, edge_line(&quad.tl, &quad.tr)?);
        Ok((lines, region, sides, ends))
    };
    let (lines, region, sides, ends) = match setup() {
        Ok(s) => s,
        Err(e) => return fail(&all, &e),
    };
    let mut out = Vec::with_capacity(12);
    let mut lengths = Vec::with_capacity(6);
    for (k, seed) in lines.across.iter().enumerate() {
        match iterative_line_refit(&region, seed, params) {
            Ok(fit) => {
                out.push((Feature::I, k, line_slope_percent(&fit.line)));
                lengths.push((Feature::K, k, span_inches(&fit.line, &sides.0, &sides.1)));
            }
            Err(e) => {
                out.push((Feature::I, k, Err(e.clone())));
                lengths.push((Feature::K, k, Err(e)));
            }
        }
    }
    for (k, seed) in lines.along.iter().enumerate() {
        match iterative_line_refit(&region, seed, params) {
            Ok(fit) => {
                out.push((Feature::J, k, line_slope_percent(&fit.line)));
                lengths.push((Feature::L, k, span_inches(&fit.line, &ends.0, &ends.1)));
            }
            Err(e) => {
                out.push((Feature::J, k, Err(e.clone())));
                lengths.push((Feature::L, k, Err(e)));
            }
        }
    }
    out.extend(lengths);
    out
}

/// F1–F2 (gutter slope, parallel to the curb), G1–G3 (gutter cross slope)
/// and H1–H3 (road cross slope in the band beyond the gutter).
pub fn measure_gutter_and_road(
    probe: &SurfaceProbe,
    gutter: &Quad,
    road: Result<&Quad, &MeasureError>,
    params: &MeasureParams,
) -> Vec<(Feature, usize, Reading)> {
    let mut out = Vec::with_capacity(8);
    let gutter_part = || -> Result<_, MeasureError> {
        let lines = quad_reference_lines(gutter, &params.fractions, &params.gutter_fractions)?;
        Ok((lines, probe.points_in(gutter)?))
    };
    match gutter_part() {
        Ok((lines, region)) => {
            for (k, seed) in lines.across.iter().enumerate() {
                out.push((Feature::F, k, super::ramp::slope_of(&region, seed, params)));
            }
            for (k, seed) in lines.along.iter().enumerate() {
                out.push((Feature::G, k, super::ramp::slope_of(&region, seed, params)));
            }
        }
        Err(e) => out.extend(fail(&[Feature::F, Feature::G].into_iter().flat_map(subs).collect::<Vec<_>>(), &e)),
    }
    let road_part = || -> Result<_, MeasureError> {
        let quad = road.map_err(Clone::clone)?;
        let lines = quad_reference_lines(quad, &params.fractions, &[])?;
        Ok((lines, probe.points_in(quad)?))
    };
    match road_part() {
        Ok((lines, region)) => {
            for (k, seed) in lines.along.iter().enumerate() {
                out.push((Feature::H, k, super::ramp::slope_of(&region, seed, params)));
            }
        }
        Err(e) => out.extend(fail(&subs(Feature::H).collect::<Vec<_>>(), &e)),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Regular grid over `[x0, x1] × [y0, y1]` with heights from `z`.
    fn grid(x0: f64, x1: f64, y0: f64, y1: f64, step: f64, z: impl Fn(f64, f64) -> f64) -> Vec<Vec3> {
        let mut pts = Vec::new();
        let (nx, ny) = (((x1 - x0) / step).round() as usize, ((y1 - y0) / step).round() as usize);
        for i in 0..=nx {
            for j in 0..=ny {
                let (x, y) = (x0 + i as f64 * step, y0 + j as f64 * step);
                pts.push(Vec3::new(x, y, z(x, y)));
            }
        }
        pts
    }

    fn refs_for_box(hw: f64, top: f64, z: impl Fn(f64, f64) -> f64) -> ReferencePoints {
        let v = |x: f64, y: f64| Vec3::new(x, y, z(x, y));
        ReferencePoints { p: [v(-hw, 0.0), v(hw, 0.0), v(-hw, top), v(hw, top), v(-hw - 3.0, 0.0), v(hw + 3.0, 0.0)] }
    }

    /// Ramp rising at 7% to y = 7, a landing of depth 5 ft at grades
    /// (cross 1.2%, slope 1%), then a 0.5 ft drop.
    fn landing_scene() -> (SurfaceProbe, ReferencePoints) {
        let top = 7.0;
        let z = move |x: f64, y: f64| {
            if y < top {
                0.07 * y
            } else if y < top + 5.0 {
                0.49 + 0.012 * x + 0.01 * (y - top)
            } else {
                0.49 + 0.012 * x + 0.01 * (y - top) - 0.5
            }
        };
        let pts = grid(-4.0, 4.0, 0.0, top + 9.0, 0.05, z);
        (SurfaceProbe::from_vecs(pts, 0.15, 3), refs_for_box(25.0 / 12.0, top, z))
    }

    #[test]
    fn median_height() {
        let pts = vec![
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.1, 0.0, 2.0),
            Vec3::new(0.0, 0.1, 9.0),
            Vec3::new(0.0, -0.1, 3.0),
            Vec3::new(1.0, 1.0, 100.0),
        ];
        let probe = SurfaceProbe::from_vecs(pts, 0.15, 3);
        assert_eq!(probe.surface_z(0.0, 0.0), Some(2.5));
        // A lone point is not enough for a reading.
        assert_eq!(probe.surface_z(1.0, 1.0), None);
        assert_eq!(probe.surface_z(5.0, 5.0), None);
    }

    #[test]
    fn single_spike_does_not_end_the_walk() {
        let z = |_: f64, y: f64| 0.01 * y;
        let mut pts = grid(-1.0, 1.0, -1.0, 10.0, 0.05, z);
        // Lift every point around one step well above the surface.
        for p in pts.iter_mut().filter(|p| (p.y - 3.0).abs() < 0.16 && p.x.abs() < 0.16) {
            p.z += 0.5;
        }
        let probe = SurfaceProbe::from_vecs(pts, 0.15, 3);
        let walk = extend_edge(&probe, &Vec3::zeros(), [0.0, 1.0], &MeasureParams::default()).unwrap();
        assert!(walk.exhausted());
    }

    #[test]
    fn landing_depth_found_within_a_step() {
        let (probe, refs) = landing_scene();
        let p = MeasureParams::default();
        let landing = approximate_landing(&probe, &refs, &p).unwrap();
        assert!(!landing.exhausted);
        for side in [&landing.left, &landing.right] {
            assert!((side.distance - 5.0).abs() <= p.step_ft, "stopped at {}", side.distance);
        }
    }

    #[test]
    fn landing_measurements_match_the_planes() {
        let (probe, refs) = landing_scene();
        let p = MeasureParams::default();
        let landing = approximate_landing(&probe, &refs, &p).unwrap();
        let out = measure_landing(&probe, &landing.quad, &p);
        assert_eq!(out.len(), 12);
        let depth_in = landing.left.distance * 12.0;
        for (f, k, r) in out {
            let v = r.unwrap_or_else(|e| panic!("{f}{k}: {e}"));
            let want = match f {
                Feature::I => 1.2,
                Feature::J => 1.0,
                // Along-surface lengths: the horizontal span stretched by the grade.
                Feature::K => 50.0 * (1.0f64 + 0.012 * 0.012).sqrt(),
                Feature::L => depth_in * (1.0f64 + 0.01 * 0.01).sqrt(),
                _ => unreachable!(),
            };
            assert!((v - want).abs() < 1e-6, "{f}{}: {v} vs {want}", k + 1);
        }
    }

    #[test]
    fn level_landing_has_no_grade() {
        let z = |_: f64, y: f64| if y < 12.0 { 0.0 } else { -0.5 };
        let pts = grid(-4.0, 4.0, -1.0, 16.0, 0.05, z);
        let probe = SurfaceProbe::from_vecs(pts, 0.15, 3);
        let refs = refs_for_box(2.0, 7.0, z);
        let p = MeasureParams::default();
        let landing = approximate_landing(&probe, &refs, &p).unwrap();
        for (f, _, r) in measure_landing(&probe, &landing.quad, &p) {
            if matches!(f, Feature::I | Feature::J) {
                assert!(r.unwrap().abs() < 1e-9);
            }
        }
    }

    #[test]
    fn endless_landing_stops_at_the_cap() {
        let z = |_: f64, y: f64| 0.01 * y;
        let pts = grid(-4.0, 4.0, 0.0, 20.0, 0.05, z);
        let probe = SurfaceProbe::from_vecs(pts, 0.15, 3);
        let p = MeasureParams::default();
        let landing = approximate_landing(&probe, &refs_for_box(2.0, 7.0, z), &p).unwrap();
        assert!(landing.exhausted);
        assert!((landing.left.distance - p.max_extension_ft).abs() < 1e-9);
    }

    #[test]
    fn nothing_above_the_top_edge() {
        let z = |_: f64, y: f64| 0.07 * y;
        let pts = grid(-4.0, 4.0, 0.0, 7.0, 0.05, z);
        let probe = SurfaceProbe::from_vecs(pts, 0.15, 3);
        let err = approximate_landing(&probe, &refs_for_box(2.0, 7.0, z), &MeasureParams::default()).unwrap_err();
        assert!(matches!(err, MeasureError::NoSurfacePoints { .. }));
    }

    #[test]
    fn collapsed_quad_is_degenerate() {
        let (probe, _) = landing_scene();
        let v = |x: f64, y: f64| Vec3::new(x, y, 0.0);
        let quad = Quad { bl: v(0.0, 8.0), br: v(2.0, 8.0), tl: v(0.0, 10.0), tr: v(0.0, 10.0) };
        for (_, _, r) in measure_landing(&probe, &quad, &MeasureParams::default()) {
            assert!(matches!(r, Err(MeasureError::DegenerateGeometry(_))));
        }
    }

    /// Gutter of depth 2 ft below y = 0 (slope 1% along x, cross 4%), a 0.1 ft
    /// lip, then road at 3% cross slope.
    fn gutter_scene() -> (SurfaceProbe, ReferencePoints) {
        let z = |x: f64, y: f64| {
            if y >= 0.0 {
                0.07 * y + 0.01 * x
            } else if y >= -2.0 {
                0.01 * x - 0.04 * y
            } else {
                0.01 * x + 0.08 - 0.1 + 0.03 * (-y - 2.0)
            }
        };
        let pts = grid(-4.0, 4.0, -7.0, 7.0, 0.05, z);
        (SurfaceProbe::from_vecs(pts, 0.15, 3), refs_for_box(25.0 / 12.0, 7.0, z))
    }

    #[test]
    fn gutter_and_road_grades() {
        let (probe, refs) = gutter_scene();
        let p = MeasureParams::default();
        let gutter = approximate_gutter(&probe, &refs, &p).unwrap();
        assert!(!gutter.exhausted);
        assert!((gutter.left.distance - 2.0).abs() <= p.step_ft);
        let road = road_band(&probe, &gutter);
        let out = measure_gutter_and_road(&probe, &gutter.quad, road.as_ref(), &p);
        assert_eq!(out.len(), 8);
        for (f, k, r) in out {
            let v = r.unwrap_or_else(|e| panic!("{f}{k}: {e}"));
            let want = match f {
                Feature::F => 1.0,
                Feature::G => 4.0,
                Feature::H => 3.0,
                _ => unreachable!(),
            };
            assert!((v - want).abs() < 1e-6, "{f}{}: {v} vs {want}", k + 1);
        }
    }

    #[test]
    fn no_street_points_invalidates_gutter_and_road() {
        let z = |_: f64, y: f64| 0.07 * y;
        let pts = grid(-4.0, 4.0, 0.0, 7.0, 0.05, z);
        let probe = SurfaceProbe::from_vecs(pts, 0.15, 3);
        let refs = refs_for_box(2.0, 7.0, z);
        let err = approximate_gutter(&probe, &refs, &MeasureParams::default()).unwrap_err();
        assert!(matches!(err, MeasureError::NoSurfacePoints { .. }));
    }
}
