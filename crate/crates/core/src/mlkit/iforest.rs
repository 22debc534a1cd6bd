use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MlError;
use crate::cloud::Vec3;

const MAX_SAMPLES: usize = 256;

#[derive(Debug, Clone)]
enum Node {
    Split { axis: usize, value: f64, left: usize, right: usize },
    Leaf { size: usize },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

/// Average unsuccessful-search path length in a binary search tree of `n` keys.
pub(crate) fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = (n - 1) as f64;
            2.0 * (m.ln() + 0.577_215_664_901_532_9) - 2.0 * m / n as f64
        }
    }
}

impl Tree {
    fn grow(points: &[Vec3], idx: &mut [usize], depth: usize, limit: usize, rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        nodes.push(Node::Leaf { size: idx.len() });
        if depth >= limit || idx.len() <= 1 {
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in idx.iter() {
            for a in 0..3 {
                lo[a] = lo[a].min(points[i][a]);
                hi[a] = hi[a].max(points[i][a]);
            }
        }
        let axes: Vec<usize> = (0..3).filter(|&a| hi[a] > lo[a]).collect();
        if axes.is_empty() {
            return id;
        }
        let axis = axes[rng.random_range(0..axes.len())];
        let value = rng.random_range(lo[axis]..hi[axis]);
        let mut k = 0;
        for j in 0..idx.len() {
            if points[idx[j]][axis] < value {
                idx.swap(j, k);
                k += 1;
            }
        }
        let (l, r) = idx.split_at_mut(k);
        let left = Self::grow(points, l, depth + 1, limit, rng, nodes);
        let right = Self::grow(points, r, depth + 1, limit, rng, nodes);
        nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    fn path_length(&self, p: &Vec3) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[node] {
                Node::Leaf { size } => return depth + average_path_length(size),
                Node::Split { axis, value, left, right } => {
                    node = if p[axis] < value { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }
}

/// Isolation forest over 3D points. Scores lie in (0, 1]; higher is more anomalous.
#[derive(Debug, Clone)]
pub struct IsolationForestModel {
    trees: Vec<Tree>,
    pub subsample: usize,
    pub contamination: f64,
    /// Score of the last flagged training point; points scoring at or above it are outliers.
    pub threshold: f64,
}

impl IsolationForestModel {
    pub fn fit(points: &[Vec3], n_trees: usize, contamination: f64, seed: u64) -> Result<Self, MlError> {
        if points.len() < 8 {
            return Err(MlError::TooFewPoints { got: points.len(), need: 8 });
        }
        if n_trees == 0 {
            return Err(MlError::InvalidParameter("n_trees must be at least 1".into()));
        }
        if !(contamination > 0.0 && contamination < 0.5) {
            return Err(MlError::InvalidParameter(format!("contamination {contamination} outside (0, 0.5)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = points.len().min(MAX_SAMPLES);
        let limit = (psi as f64).log2().ceil() as usize;
        let trees = (0..n_trees)
            .map(|_| {
                let mut idx = sample(&mut rng, points.len(), psi).into_vec();
                let mut nodes = Vec::new();
                Tree::grow(points, &mut idx, 0, limit, &mut rng, &mut nodes);
                Tree { nodes }
            })
            .collect();
        let mut model = Self { trees, subsample: psi, contamination, threshold: 1.0 };
        let (order, scores) = model.ranked(points);
        let k = model.flag_count(points.len());
        model.threshold = scores[order[k - 1]];
        Ok(model)
    }

    pub fn score(&self, p: &Vec3) -> f64 {
        let mean = self.trees.iter().map(|t| t.path_length(p)).sum::<f64>() / self.trees.len() as f64;
        2f64.powf(-mean / average_path_length(self.subsample))
    }

    fn flag_count(&self, n: usize) -> usize {
        ((self.contamination * n as f64).ceil() as usize).clamp(1, n)
    }

    /// Indices sorted by descending score, ties by index.
    fn ranked(&self, points: &[Vec3]) -> (Vec<usize>, Vec<f64>) {
        let scores: Vec<f64> = points.iter().map(|p| self.score(p)).collect();
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        (order, scores)
    }

    /// Exactly `ceil(contamination * n)` points flagged by score rank.
    pub fn flag(&self, points: &[Vec3]) -> Vec<bool> {
        let (order, _) = self.ranked(points);
        let mut mask = vec![false; points.len()];
        for &i in order.iter().take(self.flag_count(points.len())) {
            mask[i] = true;
        }
        mask
    }
}

pub fn iforest_flag(points: &[Vec3], n_trees: usize, contamination: f64, seed: u64) -> Result<Vec<bool>, MlError> {
    Ok(IsolationForestModel::fit(points, n_trees, contamination, seed)?.flag(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blob_with_outliers(seed: u64, n: usize, far: usize) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Normal::new(0.0, 1.0).unwrap();
        let mut pts: Vec<Vec3> =
            (0..n).map(|_| Vec3::new(g.sample(&mut rng), g.sample(&mut rng), g.sample(&mut rng))).collect();
        for k in 0..far {
            let a = k as f64 / far as f64 * std::f64::consts::TAU;
            pts.push(Vec3::new(25.0 * a.cos(), 25.0 * a.sin(), rng.random_range(-20.0..20.0)));
        }
        pts
    }

    #[test]
    fn path_length_normaliser() {
        assert_eq!(average_path_length(1), 0.0);
        assert_eq!(average_path_length(2), 1.0);
        // 2 H(255) - 2 * 255 / 256, with H by direct summation.
        let h: f64 = (1..=255).map(|k| 1.0 / k as f64).sum();
        let direct = 2.0 * h - 2.0 * 255.0 / 256.0;
        assert!((average_path_length(256) - direct).abs() < 5e-3);
    }

    #[test]
    fn distant_points_are_flagged() {
        let pts = blob_with_outliers(7, 1000, 20);
        let mask = iforest_flag(&pts, 100, 0.02, 11).unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 21);
        assert!(mask[1000..].iter().all(|&m| m));
    }

    #[test]
    fn exact_count_rule() {
        let pts = blob_with_outliers(1, 100, 0);
        let mask = iforest_flag(&pts, 50, 0.02, 0).unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 2);
    }

    #[test]
    fn same_seed_same_flags() {
        let pts = blob_with_outliers(3, 300, 5);
        assert_eq!(iforest_flag(&pts, 100, 0.02, 9).unwrap(), iforest_flag(&pts, 100, 0.02, 9).unwrap());
    }

    #[test]
    fn scores_in_unit_interval_and_small_input_rejected() {
        let pts = blob_with_outliers(5, 200, 3);
        let model = IsolationForestModel::fit(&pts, 20, 0.05, 2).unwrap();
        for p in &pts {
            let s = model.score(p);
            assert!(s > 0.0 && s <= 1.0);
        }
        assert!(matches!(iforest_flag(&pts[..7], 10, 0.02, 0), Err(MlError::TooFewPoints { .. })));
    }
}
