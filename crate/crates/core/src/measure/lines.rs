use super::{MeasureError, MeasureParams, Quad};
use crate::cloud::{Line3, Plane, Segment3, Vec3};
use crate::mlkit::fit_plane;

/// `tan(θ) · 100` for an angle in degrees.
pub fn percent_grade(theta_deg: f64) -> Result<f64, MeasureError> {
    if !(theta_deg.abs() < 90.0) {
        return Err(MeasureError::OutOfRange(theta_deg));
    }
    Ok(theta_deg.to_radians().tan() * 100.0)
}

/// Unsigned grade of a 3D line in percent.
pub fn line_slope_percent(line: &Line3) -> Result<f64, MeasureError> {
    let d = line.direction;
    let run = d.x.hypot(d.y);
    if run <= 1e-12 * d.norm() {
        return Err(MeasureError::VerticalLine);
    }
    Ok(100.0 * d.z.abs() / run)
}

/// Seed segments inside a quadrilateral.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceLines {
    /// From the bottom edge (bl→br) to the top edge (tl→tr) at matching fractions.
    pub along: Vec<Segment3>,
    /// From the left edge (bl→tl) to the right edge (br→tr) at matching fractions.
    pub across: Vec<Segment3>,
}

/// Seed segments inside `quad`: `along` lines at the `along` fractions of the
/// bottom edge and `across` lines at the `across` fractions of the side edges.
pub fn quad_reference_lines(quad: &Quad, along: &[f64], across: &[f64]) -> Result<ReferenceLines, MeasureError> {
    let Quad { bl, br, tl, tr } = *quad;
    let horiz = |a: &Vec3, b: &Vec3| (b.x - a.x).hypot(b.y - a.y);
    for (name, a, b) in [("bottom", &bl, &br), ("top", &tl, &tr), ("left", &bl, &tl), ("right", &br, &tr)] {
        if !(horiz(a, b) > 1e-9) {
            return Err(MeasureError::DegenerateGeometry(format!("{name} edge has zero length")));
        }
    }
    let lerp = |a: &Vec3, b: &Vec3, f: f64| a + (b - a) * f;
    let along: Vec<Segment3> = along.iter().map(|&f| Segment3::new(lerp(&bl, &br, f), lerp(&tl, &tr, f))).collect();
    let across: Vec<Segment3> = across.iter().map(|&f| Segment3::new(lerp(&bl, &tl, f), lerp(&br, &tr, f))).collect();
    for s in along.iter().chain(across.iter()) {
        if !(horiz(&s.start, &s.end) > 1e-9) {
            return Err(MeasureError::DegenerateGeometry("reference line has zero length".into()));
        }
    }
    Ok(ReferenceLines { along, across })
}

/// Result of refitting one reference line.
#[derive(Debug, Clone, PartialEq)]
pub struct Refit {
    pub line: Line3,
    /// The seed's endpoints lifted vertically onto the local surface.
    pub segment: Segment3,
    pub plane: Plane,
    /// Indices (into the region) of the points that survived.
    pub support: Vec<usize>,
    pub iterations: usize,
}

/// Indices of the `k` region points closest to the segment, ties by index.
pub fn nearest_to_segment(points: &[Vec3], seed: &Segment3, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (seed.distance(p), i)).collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if d.len() > k {
        d.select_nth_unstable_by(k, cmp);
        d.truncate(k);
    }
    d.sort_by(cmp);
    d.into_iter().map(|(_, i)| i).collect()
}

/// Refine a seed segment against the surface. Starting from the `k` points
/// nearest the seed, a local plane is fitted and the points farthest from it
/// are dropped, refitting each time, until every remaining point lies within
/// the discard distance. The refined line is where the local surface meets
/// the vertical plane through the seed.
pub fn iterative_line_refit(points: &[Vec3], seed: &Segment3, params: &MeasureParams) -> Result<Refit, MeasureError> {
    const MIN_SUPPORT: usize = 10;
    let mut support = nearest_to_segment(points, seed, params.neighbors);
    if support.len() < MIN_SUPPORT {
        return Err(MeasureError::InsufficientSupport { got: support.len() });
    }
    for iteration in 1..=params.max_iterations {
        let local: Vec<Vec3> = support.iter().map(|&i| points[i]).collect();
        let plane = fit_plane(&local).map_err(|e| MeasureError::DegenerateGeometry(e.to_string()))?;
        let before = support.len();
        let worst = support.iter().map(|&i| plane.signed_distance(&points[i]).abs()).fold(0.0, f64::max);
        // Gross outliers drag the first fits; trimming from the worst end down keeps
        // them from pushing good points out of the band.
        let cut = params.discard_ft.max(0.5 * worst);
        support.retain(|&i| plane.signed_distance(&points[i]).abs() <= cut);
        if support.len() == before {
            let lift = |p: &Vec3| {
                plane.z_at(p.x, p.y).map(|z| Vec3::new(p.x, p.y, z)).ok_or(MeasureError::VerticalLine)
            };
            let segment = Segment3::new(lift(&seed.start)?, lift(&seed.end)?);
            let line = Line3::through(&segment.start, &segment.end)
                .ok_or_else(|| MeasureError::DegenerateGeometry("seed has zero length".into()))?;
            return Ok(Refit { line, segment, plane, support, iterations: iteration });
        }
        if support.len() < MIN_SUPPORT {
            return Err(MeasureError::InsufficientSupport { got: support.len() });
        }
    }
    Err(MeasureError::NonConvergence { iterations: params.max_iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grade_of_known_angles() {
        assert_eq!(percent_grade(0.0).unwrap(), 0.0);
        assert!((percent_grade(45.0).unwrap() - 100.0).abs() < 1e-12);
        // tan(4.40°) = 0.076946...
        assert!((percent_grade(4.40).unwrap() - 7.6946).abs() < 1e-3);
        assert!(matches!(percent_grade(90.0), Err(MeasureError::OutOfRange(_))));
    }

    #[test]
    fn slope_of_lines() {
        let l = Line3::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.077)).unwrap();
        assert!((line_slope_percent(&l).unwrap() - 7.7).abs() < 1e-12);
        let flat = Line3::new(Vec3::zeros(), Vec3::new(0.3, -0.4, 0.0)).unwrap();
        assert_eq!(line_slope_percent(&flat).unwrap(), 0.0);
        let up = Line3::new(Vec3::zeros(), Vec3::z()).unwrap();
        assert_eq!(line_slope_percent(&up), Err(MeasureError::VerticalLine));
    }

    #[test]
    fn unit_square_midlines() {
        let (bl, br, tl, tr) =
            (Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(1.0, 1.0, 0.0));
        let f = [0.1, 0.5, 0.9];
        let r = quad_reference_lines(&Quad { bl, br, tl, tr }, &f, &f).unwrap();
        assert_eq!((r.along.len(), r.across.len()), (3, 3));
        assert_eq!(r.along[1].start, Vec3::new(0.5, 0.0, 0.0));
        assert_eq!(r.along[1].end, Vec3::new(0.5, 1.0, 0.0));
        assert_eq!(r.across[0].start, Vec3::new(0.0, 0.1, 0.0));
        assert_eq!(r.across[2].end, Vec3::new(1.0, 0.9, 0.0));
        assert!(quad_reference_lines(&Quad { bl, br: bl, tl, tr }, &f, &f).is_err());
    }

    fn plane_grid(n: usize, step: f64, z: impl Fn(f64, f64) -> f64) -> Vec<Vec3> {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (i as f64 * step, j as f64 * step);
                pts.push(Vec3::new(x, y, z(x, y)));
            }
        }
        pts
    }

    #[test]
    fn noiseless_plane_converges_at_once() {
        let pts = plane_grid(40, 0.1, |x, y| 0.07 * y + 0.015 * x);
        let seed = Segment3::new(Vec3::new(2.0, 0.5, 0.0), Vec3::new(2.0, 3.5, 0.0));
        let fit = iterative_line_refit(&pts, &seed, &MeasureParams::default()).unwrap();
        assert_eq!(fit.iterations, 1);
        assert_eq!(fit.support.len(), 300);
        assert!((line_slope_percent(&fit.line).unwrap() - 7.0).abs() < 1e-9);
        assert!((fit.segment.start.z - (0.035 + 0.03)).abs() < 1e-9);
    }

    #[test]
    fn off_surface_points_are_dropped() {
        let mut pts = plane_grid(40, 0.1, |_, y| 0.05 * y);
        let n = pts.len();
        for k in 0..5 {
            pts.push(Vec3::new(1.95, 0.6 + 0.5 * k as f64, 0.05 * (0.6 + 0.5 * k as f64) + 1.0 / 12.0));
        }
        let seed = Segment3::new(Vec3::new(2.0, 0.5, 0.0), Vec3::new(2.0, 3.5, 0.0));
        let fit = iterative_line_refit(&pts, &seed, &MeasureParams::default()).unwrap();
        assert!(fit.support.iter().all(|&i| i < n));
        assert!((line_slope_percent(&fit.line).unwrap() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn too_little_support() {
        let pts = plane_grid(3, 0.1, |_, _| 0.0);
        let seed = Segment3::new(Vec3::zeros(), Vec3::new(0.2, 0.2, 0.0));
        assert_eq!(
            iterative_line_refit(&pts[..8], &seed, &MeasureParams::default()),
            Err(MeasureError::InsufficientSupport { got: 8 })
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn refit_is_a_fixed_point(gx in -0.1f64..0.1, gy in -0.1f64..0.1, seed_rng in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed_rng);
            let pts: Vec<Vec3> = (0..1500)
                .map(|_| {
                    let (x, y) = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
                    let bump = if rng.random_bool(0.05) { 0.5 } else { 0.0 };
                    Vec3::new(x, y, gx * x + gy * y + bump + rng.random_range(-0.005..0.005))
                })
                .collect();
            let seed = Segment3::new(Vec3::new(1.0, 1.0, 0.0), Vec3::new(4.0, 3.0, 0.0));
            let p = MeasureParams::default();
            let first = iterative_line_refit(&pts, &seed, &p).unwrap();
            // Refitting the surviving points from the refined segment keeps every one of them.
            let kept: Vec<Vec3> = first.support.iter().map(|&i| pts[i]).collect();
            let again = iterative_line_refit(&kept, &first.segment, &p).unwrap();
            prop_assert_eq!(again.iterations, 1);
            prop_assert_eq!(again.support.len(), kept.len());
            let (s1, s2) = (line_slope_percent(&first.line).unwrap(), line_slope_percent(&again.line).unwrap());
            prop_assert!((s1 - s2).abs() < 1e-9);
        }

        #[test]
        fn slope_invariant_under_rigid_motion(angle in 0.0f64..360.0, tx in -100.0f64..100.0, tz in -5.0f64..5.0) {
            let pts = plane_grid(40, 0.1, |x, y| 0.06 * y - 0.02 * x);
            let seed = Segment3::new(Vec3::new(1.0, 0.5, 0.0), Vec3::new(2.5, 3.5, 0.0));
            let p = MeasureParams::default();
            let base = line_slope_percent(&iterative_line_refit(&pts, &seed, &p).unwrap().line).unwrap();
            let (s, c) = angle.to_radians().sin_cos();
            let m = |v: &Vec3| Vec3::new(c * v.x - s * v.y + tx, s * v.x + c * v.y - tx, v.z + tz);
            let moved: Vec<Vec3> = pts.iter().map(m).collect();
            let seed2 = Segment3::new(m(&seed.start), m(&seed.end));
            let rot = line_slope_percent(&iterative_line_refit(&moved, &seed2, &p).unwrap().line).unwrap();
            prop_assert!((base - rot).abs() < 1e-9);
        }
    }
}
