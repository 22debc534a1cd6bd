use super::MlError;

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain. Returns hull vertices counterclockwise, starting
/// from the lowest-x (then lowest-y) point, with collinear edge points removed.
pub fn convex_hull_2d(points: &[[f64; 2]]) -> Result<Vec<[f64; 2]>, MlError> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return Err(MlError::DegenerateGeometry("hull needs 3 distinct points".into()));
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    if hull.len() < 3 {
        return Err(MlError::DegenerateGeometry("points are collinear".into()));
    }
    Ok(hull)
}

/// Signed shoelace area; positive for counterclockwise polygons.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        s += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * s
}

/// Inclusive containment test for a counterclockwise convex polygon.
pub fn point_in_convex_polygon(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = poly.len();
    (0..n).all(|i| cross(poly[i], poly[(i + 1) % n], p) >= -1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_with_center() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [0.5, 0.0]];
        let hull = convex_hull_2d(&pts).unwrap();
        assert_eq!(hull, vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
        assert!((polygon_area(&hull) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn collinear_is_degenerate() {
        let pts = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        assert!(matches!(convex_hull_2d(&pts), Err(MlError::DegenerateGeometry(_))));
    }

    /// O(n³) oracle: a directed edge (i, j) is a hull edge when every other
    /// point lies strictly to its left.
    fn brute_hull_edges(pts: &[[f64; 2]]) -> Vec<([f64; 2], [f64; 2])> {
        let mut edges = Vec::new();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                if i == j {
                    continue;
                }
                let ok = (0..pts.len())
                    .filter(|&k| k != i && k != j)
                    .all(|k| cross(pts[i], pts[j], pts[k]) > 0.0);
                if ok {
                    edges.push((pts[i], pts[j]));
                }
            }
        }
        edges
    }

    #[test]
    fn circle_points_all_on_hull_ccw() {
        let pts: Vec<[f64; 2]> = (0..24)
            .map(|k| {
                let a = (k * 7 % 24) as f64 / 24.0 * std::f64::consts::TAU;
                [3.0 * a.cos() + 1.0, 3.0 * a.sin() - 2.0]
            })
            .collect();
        let hull = convex_hull_2d(&pts).unwrap();
        assert_eq!(hull.len(), 24);
        let brute = brute_hull_edges(&pts);
        assert_eq!(brute.len(), 24);
        for i in 0..hull.len() {
            let e = (hull[i], hull[(i + 1) % hull.len()]);
            assert!(brute.contains(&e), "edge {:?} not a brute-force hull edge", e);
        }
        assert!(polygon_area(&hull) > 0.0);
    }

    #[test]
    fn all_points_inside_random_hull() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let pts: Vec<[f64; 2]> =
                (0..200).map(|_| [rng.random_range(-4.0..4.0), rng.random_range(-1.0..2.0)]).collect();
            let hull = convex_hull_2d(&pts).unwrap();
            for &p in &pts {
                for i in 0..hull.len() {
                    assert!(cross(hull[i], hull[(i + 1) % hull.len()], p) >= -1e-12);
                }
            }
        }
    }
}
