//! Separator lines between ramp components, the ramp's bottom edge, and the
//! six ordered reference corners.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{Line2, Point3, Vec3};
use crate::mlkit::{convex_hull_2d, MlError, SpatialIndex};

pub const DEFAULT_CANDIDATE_CAP: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefError {
    #[error("all candidate points coincide")]
    DegenerateCandidates,
    #[error("separator scoring needs non-empty point sets")]
    EmptySet,
    #[error("no unassigned points between the separators")]
    EmptyRegion,
    #[error("height filter removed every center-ramp point")]
    DegenerateFilter,
    #[error("{0} separator does not cross the ramp hull exactly twice")]
    NoIntersection(&'static str),
    #[error("separator axes cancel; ramp direction is undefined")]
    DegenerateAxis,
    #[error("missing component: {0}")]
    MissingComponent(&'static str),
    #[error(transparent)]
    Geometry(#[from] MlError),
}

/// A scored separator candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub line: Line2,
    pub score: usize,
    /// Summed distance of the points on the wrong side (or on the line).
    pub misfit: f64,
}

/// Score one oriented line: points of `a` strictly negative plus points of
/// `b` strictly positive.
pub fn separation_score(line: &Line2, a: &[[f64; 2]], b: &[[f64; 2]]) -> (usize, f64) {
    let mut score = 0;
    let mut misfit = 0.0;
    for p in a {
        let e = line.eval(*p);
        if e < 0.0 {
            score += 1;
        } else {
            misfit += e;
        }
    }
    for p in b {
        let e = line.eval(*p);
        if e > 0.0 {
            score += 1;
        } else {
            misfit -= e;
        }
    }
    (score, misfit)
}

/// Both orientations of the line through `p` and `q` scored in one pass.
/// Sides are evaluated relative to `p` so the pair itself lands exactly on the line.
fn score_both(p: [f64; 2], q: [f64; 2], a: &[[f64; 2]], b: &[[f64; 2]]) -> [(usize, f64); 2] {
    let (na, nb) = (q[1] - p[1], p[0] - q[0]);
    let inv = 1.0 / na.hypot(nb);
    let eval = |v: &[f64; 2]| na * (v[0] - p[0]) + nb * (v[1] - p[1]);
    let (mut a_neg, mut a_pos, mut b_neg, mut b_pos) = (0usize, 0usize, 0usize, 0usize);
    let (mut a_pos_d, mut a_neg_d, mut b_pos_d, mut b_neg_d) = (0.0, 0.0, 0.0, 0.0);
    for v in a {
        let e = eval(v);
        if e < 0.0 {
            a_neg += 1;
            a_neg_d -= e;
        } else if e > 0.0 {
            a_pos += 1;
            a_pos_d += e;
        }
    }
    for v in b {
        let e = eval(v);
        if e > 0.0 {
            b_pos += 1;
            b_pos_d += e;
        } else if e < 0.0 {
            b_neg += 1;
            b_neg_d -= e;
        }
    }
    [(a_neg + b_pos, (a_pos_d + b_neg_d) * inv), (a_pos + b_neg, (a_neg_d + b_pos_d) * inv)]
}

/// `true` when candidate `x` beats `y`: higher score, then smaller misfit, then lower index.
fn better(x: &(usize, f64, usize), y: &(usize, f64, usize)) -> bool {
    x.0 > y.0 || (x.0 == y.0 && (x.1 < y.1 || (x.1 == y.1 && x.2 < y.2)))
}

/// Score-based line fitting: the line through a pair of candidate points
/// that best puts `a` on its negative side and `b` on its positive side.
pub fn sblf(a: &[[f64; 2]], b: &[[f64; 2]], c: &[[f64; 2]], cap: usize, seed: u64) -> Result<Scored, RefError> {
    if a.is_empty() || b.is_empty() {
        return Err(RefError::EmptySet);
    }
    let cands: Vec<[f64; 2]> = if c.len() > cap.max(2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, c.len(), cap.max(2)).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| c[i]).collect()
    } else {
        c.to_vec()
    };
    let m = cands.len();
    let best = (0..m)
        .into_par_iter()
        .flat_map_iter(|i| (i + 1..m).map(move |j| (i, j)))
        .filter_map(|(i, j)| {
            let line = Line2::through(cands[i], cands[j])?;
            let pair = i * m + j;
            let [fwd, rev] = score_both(cands[i], cands[j], a, b);
            let f = (fwd.0, fwd.1, 2 * pair, line);
            let r = (rev.0, rev.1, 2 * pair + 1, line.flipped());
            Some(if better(&(r.0, r.1, r.2), &(f.0, f.1, f.2)) { r } else { f })
        })
        .reduce_with(|x, y| if better(&(y.0, y.1, y.2), &(x.0, x.1, x.2)) { y } else { x });
    let (score, misfit, _, line) = best.ok_or(RefError::DegenerateCandidates)?;
    Ok(Scored { line, score, misfit })
}

/// Coefficient-wise mean of two lines after aligning their normals.
pub fn average_lines(l1: &Line2, l2: &Line2) -> Line2 {
    let l2 = if l1.a * l2.a + l1.b * l2.b < 0.0 { l2.flipped() } else { *l2 };
    Line2::new(l1.a + l2.a, l1.b + l2.b, l1.c + l2.c).unwrap_or(*l1)
}

fn derive_seed(seed: u64, salt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Boundary between a flare and the center ramp: the average of the best
/// lines drawn through flare points and through center points. The flare
/// ends up on the negative side.
pub fn fit_separator(flare: &[[f64; 2]], center: &[[f64; 2]], cap: usize, seed: u64) -> Result<Line2, RefError> {
    let lf = sblf(flare, center, flare, cap, derive_seed(seed, 1))?;
    let lm = sblf(flare, center, center, cap, derive_seed(seed, 2))?;
    Ok(average_lines(&lf.line, &lm.line))
}

/// The center ramp's bottom edge, separating low center-ramp points from
/// unassigned ground between the two separators. Center points end up on the
/// negative side.
pub fn fit_bottom_line(
    center: &[Vec3],
    unassigned: &[Vec3],
    left: &Line2,
    right: &Line2,
    cap: usize,
    seed: u64,
) -> Result<Line2, RefError> {
    if center.is_empty() {
        return Err(RefError::MissingComponent("center ramp"));
    }
    let z_mid = center.iter().map(|p| p.z).sum::<f64>() / center.len() as f64;
    let a: Vec<[f64; 2]> = center.iter().filter(|p| p.z < z_mid).map(|p| [p.x, p.y]).collect();
    let b: Vec<[f64; 2]> = unassigned
        .iter()
        .filter(|p| {
            let q = [p.x, p.y];
            left.eval(q) > 0.0 && right.eval(q) < 0.0 && p.z < z_mid
        })
        .map(|p| [p.x, p.y])
        .collect();
    if b.is_empty() {
        return Err(RefError::EmptyRegion);
    }
    if a.is_empty() {
        return Err(RefError::DegenerateFilter);
    }
    let la = sblf(&a, &b, &a, cap, derive_seed(seed, 3))?;
    let lb = sblf(&a, &b, &b, cap, derive_seed(seed, 4))?;
    Ok(average_lines(&la.line, &lb.line))
}

/// Where an infinite line crosses the boundary of a convex polygon. Exactly
/// two crossings are required; a vertex on the line counts once.
pub fn hull_crossings(hull: &[[f64; 2]], line: &Line2, name: &'static str) -> Result<[[f64; 2]; 2], RefError> {
    let n = hull.len();
    let vals: Vec<f64> = hull.iter().map(|v| line.eval(*v)).collect();
    let mut hits: Vec<[f64; 2]> = Vec::new();
    for i in 0..n {
        let j = (i + 1) % n;
        if vals[i] == 0.0 {
            hits.push(hull[i]);
        } else if vals[i] * vals[j] < 0.0 {
            let t = vals[i] / (vals[i] - vals[j]);
            hits.push([hull[i][0] + t * (hull[j][0] - hull[i][0]), hull[i][1] + t * (hull[j][1] - hull[i][1])]);
        }
    }
    if hits.len() != 2 {
        return Err(RefError::NoIntersection(name));
    }
    Ok([hits[0], hits[1]])
}

/// Separator crossings with the hull: two for the left separator followed by
/// two for the right separator.
pub fn corner_points(hull: &[[f64; 2]], left: &Line2, right: &Line2) -> Result<[[f64; 2]; 4], RefError> {
    let l = hull_crossings(hull, left, "left")?;
    let r = hull_crossings(hull, right, "right")?;
    Ok([l[0], l[1], r[0], r[1]])
}

/// Index of the flare point farthest from the separator; ties go to the lower index.
pub fn flare_outer_corner(flare: &[Vec3], sep: &Line2) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in flare.iter().enumerate() {
        let d = sep.eval([p.x, p.y]).abs();
        if best.is_none_or(|(bd, _)| d > bd) {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| i)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separators {
    pub left: Line2,
    pub right: Line2,
    pub bottom: Line2,
}

/// P1..P4 are the center-ramp corners (bottom-left, bottom-right, top-left,
/// top-right); P5 and P6 the outer corners of the left and right flares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoints {
    pub p: [Vec3; 6],
}

impl ReferencePoints {
    pub fn get(&self, k: usize) -> Vec3 {
        self.p[k - 1]
    }

    pub fn xy(&self, k: usize) -> [f64; 2] {
        [self.p[k - 1].x, self.p[k - 1].y]
    }
}

fn normalize2(v: [f64; 2]) -> Option<[f64; 2]> {
    let n = v[0].hypot(v[1]);
    (n > 1e-9).then(|| [v[0] / n, v[1] / n])
}

/// Orient the separators so the left flare is on the negative side of the
/// left separator and the right flare on the positive side of the right one.
pub fn orient_separators(left: &Line2, right: &Line2, left_flare: [f64; 2], right_flare: [f64; 2]) -> (Line2, Line2) {
    let l = if left.eval(left_flare) > 0.0 { left.flipped() } else { *left };
    let r = if right.eval(right_flare) < 0.0 { right.flipped() } else { *right };
    (l, r)
}

/// Label the four separator/hull crossings as bottom or top corners along the
/// ramp axis, attach the flare corners, and lift the 2D corners to 3D with
/// `height_at`.
pub fn orient_and_order(
    crossings: [[f64; 2]; 4],
    flare_corners: [Vec3; 2],
    left: &Line2,
    right: &Line2,
    height_at: impl Fn([f64; 2]) -> f64,
) -> Result<ReferencePoints, RefError> {
    let ul = left.direction();
    let ur = right.direction();
    let axis = normalize2([ul[0] + ur[0], ul[1] + ur[1]]).ok_or(RefError::DegenerateAxis)?;
    let mean = [
        crossings.iter().map(|p| p[0]).sum::<f64>() / 4.0,
        crossings.iter().map(|p| p[1]).sum::<f64>() / 4.0,
    ];
    let s = |p: [f64; 2]| (p[0] - mean[0]) * axis[0] + (p[1] - mean[1]) * axis[1];
    let (left_bottom, left_top) =
        if s(crossings[0]) <= s(crossings[1]) { (crossings[0], crossings[1]) } else { (crossings[1], crossings[0]) };
    let (right_bottom, right_top) =
        if s(crossings[2]) <= s(crossings[3]) { (crossings[2], crossings[3]) } else { (crossings[3], crossings[2]) };
    let lift = |q: [f64; 2]| Vec3::new(q[0], q[1], height_at(q));
    Ok(ReferencePoints {
        p: [lift(left_bottom), lift(right_bottom), lift(left_top), lift(right_top), flare_corners[0], flare_corners[1]],
    })
}

/// Everything reference extraction produces for one ramp.
#[derive(Debug, Clone, PartialEq)]
pub struct RampGeometry {
    pub separators: Separators,
    pub hull: Vec<[f64; 2]>,
    pub refs: ReferencePoints,
}

/// Build the separators, hull and ordered corners from refined component
/// points. `bottom` is the bottom edge fitted during refinement.
pub fn extract_reference(
    center: &[Vec3],
    left_flare: &[Vec3],
    right_flare: &[Vec3],
    bottom: &Line2,
    cap: usize,
    seed: u64,
) -> Result<RampGeometry, RefError> {
    if center.len() < 3 {
        return Err(RefError::MissingComponent("center ramp"));
    }
    if left_flare.is_empty() {
        return Err(RefError::MissingComponent("left flare"));
    }
    if right_flare.is_empty() {
        return Err(RefError::MissingComponent("right flare"));
    }
    let xy = |pts: &[Vec3]| pts.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>();
    let (c2, l2, r2) = (xy(center), xy(left_flare), xy(right_flare));
    let left = fit_separator(&l2, &c2, cap, derive_seed(seed, 10))?;
    let right = fit_separator(&r2, &c2, cap, derive_seed(seed, 11))?;
    let centroid = |pts: &[[f64; 2]]| {
        let n = pts.len() as f64;
        [pts.iter().map(|p| p[0]).sum::<f64>() / n, pts.iter().map(|p| p[1]).sum::<f64>() / n]
    };
    let (left, right) = orient_separators(&left, &right, centroid(&l2), centroid(&r2));

    let mut all: Vec<Vec3> = Vec::with_capacity(center.len() + left_flare.len() + right_flare.len());
    all.extend_from_slice(center);
    all.extend_from_slice(left_flare);
    all.extend_from_slice(right_flare);
    let hull = convex_hull_2d(&xy(&all))?;
    let crossings = corner_points(&hull, &left, &right)?;
    let p5 = left_flare[flare_outer_corner(left_flare, &left).expect("non-empty")];
    let p6 = right_flare[flare_outer_corner(right_flare, &right).expect("non-empty")];
    let index = SpatialIndex::planar(&all, 0.25);
    let height_at = |q: [f64; 2]| {
        let nn = index.nearest(&Vec3::new(q[0], q[1], 0.0), 1);
        all[nn[0]].z
    };
    let refs = orient_and_order(crossings, [p5, p6], &left, &right, height_at)?;
    Ok(RampGeometry { separators: Separators { left, right, bottom: *bottom }, hull, refs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceExport {
    #[serde(rename = "P1")]
    pub p1: [f64; 3],
    #[serde(rename = "P2")]
    pub p2: [f64; 3],
    #[serde(rename = "P3")]
    pub p3: [f64; 3],
    #[serde(rename = "P4")]
    pub p4: [f64; 3],
    #[serde(rename = "P5")]
    pub p5: [f64; 3],
    #[serde(rename = "P6")]
    pub p6: [f64; 3],
    pub separators: SeparatorExport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatorExport {
    pub left: [f64; 3],
    pub right: [f64; 3],
    pub bottom: [f64; 3],
}

impl RampGeometry {
    pub fn export(&self) -> ReferenceExport {
        let a = |v: Vec3| [v.x, v.y, v.z];
        let p = &self.refs.p;
        ReferenceExport {
            p1: a(p[0]),
            p2: a(p[1]),
            p3: a(p[2]),
            p4: a(p[3]),
            p5: a(p[4]),
            p6: a(p[5]),
            separators: SeparatorExport {
                left: self.separators.left.as_array(),
                right: self.separators.right.as_array(),
                bottom: self.separators.bottom.as_array(),
            },
        }
    }
}

/// Convenience for callers holding `Point3` slices.
pub fn to_vecs(points: &[Point3]) -> Vec<Vec3> {
    points.iter().map(Point3::vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Exhaustive oracle: best score over every ordered candidate pair and both orientations.
    fn brute_max(a: &[[f64; 2]], b: &[[f64; 2]], c: &[[f64; 2]]) -> usize {
        let mut best = 0;
        for i in 0..c.len() {
            for j in 0..c.len() {
                if i == j || c[i] == c[j] {
                    continue;
                }
                // Side of p: sign of the cross product (c_j - c_i) x (p - c_i), negated.
                let side = |p: &[f64; 2]| {
                    -((c[j][0] - c[i][0]) * (p[1] - c[i][1]) - (c[j][1] - c[i][1]) * (p[0] - c[i][0]))
                };
                let neg = a.iter().filter(|p| side(p) < 0.0).count() + b.iter().filter(|p| side(p) > 0.0).count();
                best = best.max(neg);
            }
        }
        best
    }

    #[test]
    fn separable_pairs() {
        let a = [[-1.0, 0.0], [-2.0, 1.0]];
        let b = [[1.0, 0.0], [2.0, 1.0]];
        let c: Vec<[f64; 2]> = a.iter().chain(&b).copied().collect();
        let best = sblf(&a, &b, &c, 200, 0).unwrap();
        assert_eq!(best.score, brute_max(&a, &b, &c));
        assert_eq!(separation_score(&best.line, &a, &b).0, best.score);
    }

    #[test]
    fn perfect_separation_with_outside_candidates() {
        let a = [[-1.0, 0.0], [-2.0, 1.0]];
        let b = [[1.0, 0.0], [2.0, 1.0]];
        let c = [[0.0, -5.0], [0.0, 5.0], [0.3, 2.0]];
        let best = sblf(&a, &b, &c, 200, 0).unwrap();
        assert_eq!(best.score, 4);
    }

    #[test]
    fn parallel_strips_are_split_between() {
        let a: Vec<[f64; 2]> = (0..20).map(|k| [k as f64 * 0.5, 0.0]).collect();
        let b: Vec<[f64; 2]> = (0..20).map(|k| [k as f64 * 0.5, 2.0]).collect();
        let c: Vec<[f64; 2]> = (0..20).map(|k| [k as f64 * 0.5, if k % 2 == 0 { 0.9 } else { 1.1 }]).collect();
        let best = sblf(&a, &b, &c, 200, 0).unwrap();
        assert_eq!(best.score, 40);
        assert_eq!(best.score, brute_max(&a, &b, &c));
    }

    #[test]
    fn coincident_candidates_are_degenerate() {
        let a = [[0.0, 0.0]];
        let b = [[1.0, 1.0]];
        assert_eq!(sblf(&a, &b, &[[0.5, 0.5], [0.5, 0.5]], 200, 0), Err(RefError::DegenerateCandidates));
    }

    #[test]
    fn averaging_handles_antiparallel_forms() {
        let l = Line2::new(1.0, 0.0, -2.0).unwrap();
        assert_eq!(average_lines(&l, &l), l);
        let avg = average_lines(&l, &l.flipped());
        assert!((avg.a - 1.0).abs() < 1e-15 && (avg.c + 2.0).abs() < 1e-15);
    }

    #[test]
    fn square_hull_crossing() {
        let hull = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let line = Line2::new(1.0, 0.0, -0.5).unwrap();
        let mut hits = hull_crossings(&hull, &line, "left").unwrap();
        hits.sort_by(|p, q| p[1].total_cmp(&q[1]));
        assert_eq!(hits, [[0.5, 0.0], [0.5, 1.0]]);
        let tangent = Line2::through([1.0, 0.0], [2.0, 1.0]).unwrap();
        assert_eq!(hull_crossings(&hull, &tangent, "right"), Err(RefError::NoIntersection("right")));
    }

    #[test]
    fn outer_corner_is_the_farthest_point() {
        let sep = Line2::new(1.0, 0.0, 0.0).unwrap();
        let flare = [Vec3::new(-1.0, 0.0, 0.0), Vec3::new(-4.0, 0.5, 0.3), Vec3::new(-2.0, 1.0, 0.0)];
        assert_eq!(flare_outer_corner(&flare, &sep), Some(1));
        let same = [Vec3::new(-1.0, 0.0, 0.0), Vec3::new(-1.0, 3.0, 0.0)];
        assert_eq!(flare_outer_corner(&same, &sep), Some(0));
    }

    #[test]
    fn ordering_and_degenerate_axis() {
        let left = Line2::new(1.0, 0.0, 2.0).unwrap();
        let right = Line2::new(1.0, 0.0, -2.0).unwrap();
        let crossings = [[-2.0, 6.0], [-2.0, 0.0], [2.0, 0.0], [2.0, 6.0]];
        let flares = [Vec3::new(-7.0, 0.0, 0.5), Vec3::new(7.0, 0.0, 0.5)];
        let refs = orient_and_order(crossings, flares, &left, &right, |_| 0.0).unwrap();
        assert_eq!(refs.xy(1), [-2.0, 0.0]);
        assert_eq!(refs.xy(2), [2.0, 0.0]);
        assert_eq!(refs.xy(3), [-2.0, 6.0]);
        assert_eq!(refs.xy(4), [2.0, 6.0]);
        let anti = right.flipped();
        assert_eq!(orient_and_order(crossings, flares, &left, &anti, |_| 0.0), Err(RefError::DegenerateAxis));
    }

    #[test]
    fn bottom_line_guards() {
        let left = Line2::new(1.0, 0.0, 2.0).unwrap();
        let right = Line2::new(1.0, 0.0, -2.0).unwrap();
        let center = [Vec3::new(0.0, 1.0, 0.1), Vec3::new(0.5, 2.0, 0.2)];
        let far = [Vec3::new(10.0, -1.0, 0.0)];
        assert_eq!(fit_bottom_line(&center, &far, &left, &right, 200, 0), Err(RefError::EmptyRegion));
    }

    fn random_instance(seed: u64, separable: bool) -> (Vec<[f64; 2]>, Vec<[f64; 2]>, Vec<[f64; 2]>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let na = rng.random_range(1..=60);
        let nb = rng.random_range(1..=60);
        let nc = rng.random_range(2..=40);
        let gap = if separable { 0.5 } else { -1.0 };
        let a = (0..na).map(|_| [rng.random_range(-5.0..-gap), rng.random_range(-5.0..5.0)]).collect();
        let b = (0..nb).map(|_| [rng.random_range(gap..5.0), rng.random_range(-5.0..5.0)]).collect();
        let c = (0..nc).map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
        (a, b, c)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn matches_exhaustive_search(seed in 0u64..1_000_000, separable: bool) {
            let (a, b, c) = random_instance(seed, separable);
            let best = sblf(&a, &b, &c, 200, seed).unwrap();
            prop_assert_eq!(best.score, brute_max(&a, &b, &c));
        }

        #[test]
        fn score_is_scale_and_rotation_invariant(seed in 0u64..1_000_000, scale in 0.1f64..10.0, angle in 0.0f64..6.28) {
            let (a, b, c) = random_instance(seed, false);
            let (s, co) = angle.sin_cos();
            let tf = |v: &Vec<[f64; 2]>| v.iter().map(|p| [scale * (co * p[0] - s * p[1]), scale * (s * p[0] + co * p[1])]).collect::<Vec<_>>();
            let base = sblf(&a, &b, &c, 200, 0).unwrap().score;
            let moved = sblf(&tf(&a), &tf(&b), &tf(&c), 200, 0).unwrap().score;
            prop_assert_eq!(base, moved);
        }
    }
}
