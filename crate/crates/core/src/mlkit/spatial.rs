use std::collections::HashMap;

use crate::cloud::{Point3, Vec3};

type Cell = (i64, i64, i64);

/// Uniform-grid index over 3D points supporting inclusive radius queries and
/// k-nearest lookups. A planar index ignores `z` in both bucketing and distances.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Vec3>,
    cell: f64,
    planar: bool,
    /// Point indices grouped by cell; `cells` maps a cell to its range in `order`.
    order: Vec<usize>,
    cells: HashMap<Cell, (usize, usize)>,
}

impl SpatialIndex {
    pub fn new(points: &[Vec3], cell: f64) -> Self {
        Self::build(points, cell, false)
    }

    pub fn planar(points: &[Vec3], cell: f64) -> Self {
        Self::build(points, cell, true)
    }

    pub fn from_points(points: &[Point3], cell: f64) -> Self {
        let v: Vec<Vec3> = points.iter().map(Point3::vec).collect();
        Self::new(&v, cell)
    }

    fn build(points: &[Vec3], cell: f64, planar: bool) -> Self {
        let cell = if cell.is_finite() && cell > 0.0 { cell } else { 1.0 };
        let mut keyed: Vec<(Cell, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (Self::key_of(p, cell, planar), i))
            .collect();
        keyed.sort_unstable();
        let mut cells = HashMap::new();
        let mut start = 0;
        while start < keyed.len() {
            let key = keyed[start].0;
            let mut end = start;
            while end < keyed.len() && keyed[end].0 == key {
                end += 1;
            }
            cells.insert(key, (start, end));
            start = end;
        }
        Self {
            points: points.to_vec(),
            cell,
            planar,
            order: keyed.into_iter().map(|(_, i)| i).collect(),
            cells,
        }
    }

    fn key_of(p: &Vec3, cell: f64, planar: bool) -> Cell {
        let z = if planar { 0 } else { (p.z / cell).floor() as i64 };
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64, z)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &Vec3 {
        &self.points[i]
    }

    #[inline]
    fn dist2(&self, a: &Vec3, b: &Vec3) -> f64 {
        let dx = a.x - b.x;
        let dy = a.y - b.y;
        if self.planar {
            dx * dx + dy * dy
        } else {
            let dz = a.z - b.z;
            dx * dx + dy * dy + dz * dz
        }
    }

    fn for_each_in_cells(&self, center: &Vec3, reach: i64, mut f: impl FnMut(usize)) {
        let (cx, cy, cz) = Self::key_of(center, self.cell, self.planar);
        let zr = if self.planar { 0 } else { reach };
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -zr..=zr {
                    if let Some(&(s, e)) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &i in &self.order[s..e] {
                            f(i);
                        }
                    }
                }
            }
        }
    }

    /// Every indexed point within distance `r` (inclusive), sorted by index.
    pub fn within(&self, center: &Vec3, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.within_into(center, r, &mut out);
        out
    }

    pub fn within_into(&self, center: &Vec3, r: f64, out: &mut Vec<usize>) {
        out.clear();
        if !(r >= 0.0) {
            return;
        }
        let r2 = r * r;
        let reach = (r / self.cell).ceil() as i64;
        self.for_each_in_cells(center, reach, |i| {
            if self.dist2(&self.points[i], center) <= r2 {
                out.push(i);
            }
        });
        out.sort_unstable();
    }

    /// The `k` nearest indexed points, closest first (ties by index).
    pub fn nearest(&self, center: &Vec3, k: usize) -> Vec<usize> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let k = k.min(self.points.len());
        let mut reach = 0i64;
        loop {
            let mut found: Vec<(f64, usize)> = Vec::new();
            self.for_each_in_cells(center, reach, |i| found.push((self.dist2(&self.points[i], center), i)));
            // Everything within `reach * cell` of the center is guaranteed to be inside the scanned block.
            let guaranteed = (reach as f64) * self.cell;
            found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let enough = found.len() >= k && found[k - 1].0.sqrt() <= guaranteed;
            if enough || found.len() == self.points.len() {
                return found.into_iter().take(k).map(|(_, i)| i).collect();
            }
            reach += 1;
        }
    }
}

/// Points strictly different from `p` (by coordinates) within distance `r` of it.
pub fn radius_neighbors(index: &SpatialIndex, p: &Point3, r: f64) -> Vec<usize> {
    let c = p.vec();
    index.within(&c, r).into_iter().filter(|&i| index.point(i) != &c).collect()
}
