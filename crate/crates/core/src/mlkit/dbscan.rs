use super::spatial::SpatialIndex;
use crate::cloud::Vec3;

pub const NOISE: i32 = -1;

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn lex_less(a: &Vec3, b: &Vec3) -> bool {
    (a.x, a.y, a.z).partial_cmp(&(b.x, b.y, b.z)) == Some(std::cmp::Ordering::Less)
}

/// Density-based clustering. A point is core when its closed `eps`-ball
/// (itself included) holds at least `min_pts` points. Clusters are the
/// connected components of the core graph; a border point joins the cluster
/// of its nearest core neighbour (ties by lexicographic position), so the
/// partition does not depend on input order. Clusters are numbered by their
/// lowest member index. Returns one label per point, `NOISE` for the rest.
pub fn dbscan(points: &[Vec3], eps: f64, min_pts: usize) -> Vec<i32> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let index = SpatialIndex::new(points, eps);
    let mut nbrs = Vec::new();
    let core: Vec<bool> = points
        .iter()
        .map(|p| {
            index.within_into(p, eps, &mut nbrs);
            nbrs.len() >= min_pts
        })
        .collect();

    let mut parent: Vec<usize> = (0..n).collect();
    let mut border_of: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        index.within_into(&points[i], eps, &mut nbrs);
        if core[i] {
            for &j in nbrs.iter().filter(|&&j| j > i && core[j]) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        } else {
            let mut best: Option<(f64, usize)> = None;
            for &j in nbrs.iter().filter(|&&j| core[j]) {
                let d = (points[j] - points[i]).norm_squared();
                let better = match best {
                    None => true,
                    Some((bd, bj)) => d < bd || (d == bd && lex_less(&points[j], &points[bj])),
                };
                if better {
                    best = Some((d, j));
                }
            }
            border_of[i] = best.map(|(_, j)| j);
        }
    }

    let mut root = vec![usize::MAX; n];
    for i in 0..n {
        if core[i] {
            root[i] = find(&mut parent, i);
        }
    }
    let mut ids = vec![NOISE; n];
    let mut labels = vec![NOISE; n];
    let mut next = 0;
    for i in 0..n {
        let r = if core[i] {
            root[i]
        } else if let Some(j) = border_of[i] {
            root[j]
        } else {
            continue;
        };
        if ids[r] == NOISE {
            ids[r] = next;
            next += 1;
        }
        labels[i] = ids[r];
    }
    labels
}

/// Id of the most populous cluster; ties go to the lower id. `None` when every point is noise.
pub fn largest_cluster(labels: &[i32]) -> Option<i32> {
    let max = labels.iter().copied().max()?;
    if max < 0 {
        return None;
    }
    let mut counts = vec![0usize; max as usize + 1];
    for &l in labels.iter().filter(|&&l| l >= 0) {
        counts[l as usize] += 1;
    }
    let mut best = 0usize;
    for (id, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = id;
        }
    }
    Some(best as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_separated_blobs() {
        let mut pts = Vec::new();
        for i in 0..30 {
            let a = i as f64 * 0.2;
            pts.push(Vec3::new(a.cos(), a.sin(), 0.0));
            pts.push(Vec3::new(10.0 + a.cos(), a.sin(), 0.0));
        }
        let labels = dbscan(&pts, 2.0, 4);
        let mut ids: Vec<i32> = labels.clone();
        ids.sort();
        ids.dedup();
        assert_eq!(ids, vec![0, 1]);
        assert_eq!(labels[0], 0);
        assert_eq!(labels[1], 1);
    }

    #[test]
    fn lone_point_is_noise() {
        assert_eq!(dbscan(&[Vec3::zeros()], 1.0, 2), vec![NOISE]);
    }

    #[test]
    fn unit_grid_is_one_cluster() {
        let pts: Vec<Vec3> =
            (0..10).flat_map(|i| (0..10).map(move |j| Vec3::new(i as f64, j as f64, 0.0))).collect();
        let labels = dbscan(&pts, 2.0, 4);
        assert!(labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn largest_cluster_tie_goes_low() {
        assert_eq!(largest_cluster(&[0, 1, 1, 0, NOISE]), Some(0));
        assert_eq!(largest_cluster(&[0, 1, 1, NOISE]), Some(1));
        assert_eq!(largest_cluster(&[NOISE]), None);
    }

    /// Canonical form of a partition: each label replaced by the index of the
    /// first point carrying it.
    fn canonical(labels: &[i32]) -> Vec<i64> {
        labels
            .iter()
            .map(|&l| if l < 0 { -1 } else { labels.iter().position(|&m| m == l).unwrap() as i64 })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn permutation_invariant(seed in 0u64..10_000) {
            use rand::{seq::SliceRandom, Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vec3> = (0..200)
                .map(|_| Vec3::new(rng.random_range(0.0..12.0), rng.random_range(0.0..12.0), 0.0))
                .collect();
            let base = dbscan(&pts, 1.0, 4);
            let mut perm: Vec<usize> = (0..pts.len()).collect();
            perm.shuffle(&mut rng);
            let shuffled: Vec<Vec3> = perm.iter().map(|&i| pts[i]).collect();
            let lab = dbscan(&shuffled, 1.0, 4);
            let mut back = vec![0; pts.len()];
            for (k, &i) in perm.iter().enumerate() {
                back[i] = lab[k];
            }
            prop_assert_eq!(canonical(&base), canonical(&back));
        }
    }
}
