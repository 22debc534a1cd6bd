//! Top-down grayscale rasters of point clouds, overlapping patch tiling and
//! density-adaptive dilation.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::LabeledCloud;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("image has no pixels")]
    EmptyImage,
    #[error("patch index {index} out of range ({count} patches)")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("box has zero area")]
    DegenerateBox,
    #[error("box extends beyond the {width}x{height} canvas")]
    BoxOutsideCanvas { width: usize, height: usize },
    #[error("invalid raster parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Affine map `[a, b, c, d, e, f]`: `x = a·col + b·row + c`, `y = d·col + e·row + f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine2(pub [f64; 6]);

impl Affine2 {
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let [a, b, c, d, e, f] = self.0;
        [a * p[0] + b * p[1] + c, d * p[0] + e * p[1] + f]
    }

    pub fn inverse(&self) -> Option<Affine2> {
        let [a, b, c, d, e, f] = self.0;
        let det = a * e - b * d;
        if det.abs() < 1e-15 {
            return None;
        }
        let (ia, ib, id, ie) = (e / det, -b / det, -d / det, a / det);
        Some(Affine2([ia, ib, -(ia * c + ib * f), id, ie, -(id * c + ie * f)]))
    }
}

/// Row-major 8-bit grayscale image with its pixel-to-ground transform.
/// Pixel `(col, row)` covers `[col, col+1) × [row, row+1)` in pixel coordinates;
/// row 0 is the northern edge.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    /// Pixel coordinates to ground-plane feet.
    pub transform: Affine2,
}

impl RasterImage {
    /// Blank canvas of `resolution`² pixels covering an `extent_ft` square whose lower-left corner is `origin`.
    pub fn blank(origin: [f64; 2], extent_ft: f64, resolution: usize) -> Self {
        let s = extent_ft / resolution as f64;
        Self {
            width: resolution,
            height: resolution,
            pixels: vec![0; resolution * resolution],
            transform: Affine2([s, 0.0, origin[0], 0.0, -s, origin[1] + extent_ft]),
        }
    }

    pub fn inverse(&self) -> Affine2 {
        self.transform.inverse().expect("raster transform is invertible")
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn nonzero(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }

    /// Pixel holding ground point `(x, y)`; points on the far edges fall into the last pixel.
    pub fn pixel_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let [c, r] = self.inverse().apply([x, y]);
        let tol = 1e-9;
        if c < -tol || r < -tol || c > self.width as f64 + tol || r > self.height as f64 + tol {
            return None;
        }
        let clamp = |v: f64, n: usize| (v.max(0.0).floor() as usize).min(n - 1);
        Some((clamp(c, self.width), clamp(r, self.height)))
    }

    /// Ground coordinates of a pixel centre.
    pub fn center_of(&self, col: usize, row: usize) -> [f64; 2] {
        self.transform.apply([col as f64 + 0.5, row as f64 + 0.5])
    }

    /// Binary PGM (P5).
    pub fn write_pgm<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.pixels)
    }
}

fn splat(img: &mut RasterImage, cloud: &LabeledCloud, indices: impl Iterator<Item = usize>) {
    for i in indices {
        let p = &cloud.points[i];
        if let Some((c, r)) = img.pixel_of(p.x, p.y) {
            img.pixels[r * img.width + c] = (255.0 * p.intensity.clamp(0.0, 1.0)).round() as u8;
        }
    }
}

/// Projects the cloud onto an `extent_ft` square centred on its bounding box.
/// Later points overwrite earlier ones in shared pixels; points outside the square are dropped.
pub fn project_topdown(cloud: &LabeledCloud, resolution: usize, extent_ft: f64) -> RasterImage {
    let (lo, hi) = bounds(cloud);
    let origin = [(lo[0] + hi[0] - extent_ft) / 2.0, (lo[1] + hi[1] - extent_ft) / 2.0];
    let mut img = RasterImage::blank(origin, extent_ft, resolution);
    splat(&mut img, cloud, 0..cloud.len());
    img
}

fn bounds(cloud: &LabeledCloud) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &cloud.points {
        lo = [lo[0].min(p.x), lo[1].min(p.y)];
        hi = [hi[0].max(p.x), hi[1].max(p.y)];
    }
    (lo, hi)
}

/// Side of the square dilation kernel for a tile whose nonzero fraction is `density`.
pub fn dilation_kernel(density: f64, kappa_max: usize) -> usize {
    if density <= 0.0 {
        return kappa_max;
    }
    let k = (1.0 / (2.0 * density)).floor();
    if k >= kappa_max as f64 {
        kappa_max
    } else {
        k as usize
    }
}

/// Kernel side for each `patch_px` tile, row-major over tiles; the last row and column of tiles may be ragged.
pub fn tile_kernels(img: &RasterImage, patch_px: usize, kappa_max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for r0 in (0..img.height).step_by(patch_px) {
        for c0 in (0..img.width).step_by(patch_px) {
            let (r1, c1) = ((r0 + patch_px).min(img.height), (c0 + patch_px).min(img.width));
            let nz = (r0..r1).flat_map(|r| (c0..c1).map(move |c| (c, r))).filter(|&(c, r)| img.get(c, r) != 0).count();
            out.push(dilation_kernel(nz as f64 / ((r1 - r0) * (c1 - c0)) as f64, kappa_max));
        }
    }
    out
}

/// Window of a side-`k` kernel centred on index `i`: `[i - back, i + fwd]`.
fn window(k: usize) -> (usize, usize) {
    let fwd = (k - 1) / 2;
    (k - 1 - fwd, fwd)
}

/// Gray-level dilation of the whole image with a `k × k` square, computed separably.
fn dilate_full(pixels: &[u8], width: usize, height: usize, k: usize) -> Vec<u8> {
    let (back, fwd) = window(k);
    let mut rows = vec![0u8; pixels.len()];
    rows.par_chunks_mut(width).enumerate().for_each(|(r, out)| {
        let src = &pixels[r * width..(r + 1) * width];
        for c in 0..width {
            let (a, b) = (c.saturating_sub(back), (c + fwd).min(width - 1));
            out[c] = src[a..=b].iter().copied().max().unwrap();
        }
    });
    let mut out = vec![0u8; pixels.len()];
    out.par_chunks_mut(width).enumerate().for_each(|(r, dst)| {
        let (a, b) = (r.saturating_sub(back), (r + fwd).min(height - 1));
        for (c, d) in dst.iter_mut().enumerate() {
            *d = (a..=b).map(|rr| rows[rr * width + c]).max().unwrap();
        }
    });
    out
}

/// Dilates each `patch_px` tile with the kernel its pixel density calls for,
/// then the whole image with a side-2 kernel.
pub fn adaptive_dilate(img: &RasterImage, patch_px: usize, kappa_max: usize) -> Result<RasterImage, RasterError> {
    if img.width == 0 || img.height == 0 || img.pixels.len() != img.width * img.height {
        return Err(RasterError::EmptyImage);
    }
    if patch_px == 0 || kappa_max == 0 {
        return Err(RasterError::InvalidParameter("patch size and maximum kernel must be at least 1".into()));
    }
    let kernels = tile_kernels(img, patch_px, kappa_max);
    let mut by_kernel: BTreeMap<usize, Vec<u8>> = BTreeMap::new();
    for &k in kernels.iter().filter(|&&k| k > 1) {
        by_kernel.entry(k).or_insert_with(|| dilate_full(&img.pixels, img.width, img.height, k));
    }
    let tiles_across = img.width.div_ceil(patch_px);
    let mut pixels = img.pixels.clone();
    for r in 0..img.height {
        for c in 0..img.width {
            let k = kernels[(r / patch_px) * tiles_across + c / patch_px];
            if let Some(d) = by_kernel.get(&k) {
                pixels[r * img.width + c] = d[r * img.width + c];
            }
        }
    }
    let pixels = dilate_full(&pixels, img.width, img.height, 2);
    Ok(RasterImage { pixels, ..img.clone() })
}

/// One square patch of a tiled cloud.
#[derive(Debug, Clone)]
pub struct Patch {
    /// Lower-left corner in ground feet.
    pub anchor: [f64; 2],
    pub image: RasterImage,
    /// Indices of the cloud points inside the patch footprint.
    pub points: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PatchGrid {
    pub patch_ft: f64,
    pub overlap: f64,
    pub resolution: usize,
    pub patches: Vec<Patch>,
}

/// Sidecar metadata written next to each patch image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchMeta {
    pub anchor_ft: [f64; 2],
    pub patch_ft: f64,
    pub resolution: usize,
    pub pixel_to_ground: Affine2,
    pub ground_to_pixel: Affine2,
    pub point_count: usize,
}

impl PatchGrid {
    pub fn meta(&self, index: usize) -> Option<PatchMeta> {
        let p = self.patches.get(index)?;
        Some(PatchMeta {
            anchor_ft: p.anchor,
            patch_ft: self.patch_ft,
            resolution: self.resolution,
            pixel_to_ground: p.image.transform,
            ground_to_pixel: p.image.inverse(),
            point_count: p.points.len(),
        })
    }
}

/// Number of patches needed along an axis spanning `span` feet.
pub fn patches_along(span: f64, patch_ft: f64, overlap: f64) -> usize {
    let stride = patch_ft * (1.0 - overlap);
    if span <= patch_ft {
        1
    } else {
        ((span - patch_ft) / stride - 1e-9).ceil() as usize + 1
    }
}

/// Covers the cloud's bounding box with overlapping square patches and rasterizes each
/// nonempty one. Footprints are closed, so boundary points belong to every touching patch.
pub fn tile_patches(
    cloud: &LabeledCloud,
    patch_ft: f64,
    overlap: f64,
    resolution: usize,
) -> Result<PatchGrid, RasterError> {
    if !(patch_ft > 0.0) || !(0.0..1.0).contains(&overlap) || resolution == 0 {
        return Err(RasterError::InvalidParameter(
            "patch size must be positive, overlap in [0, 1), resolution at least 1".into(),
        ));
    }
    let mut grid = PatchGrid { patch_ft, overlap, resolution, patches: Vec::new() };
    if cloud.is_empty() {
        return Ok(grid);
    }
    let (lo, hi) = bounds(cloud);
    let stride = patch_ft * (1.0 - overlap);
    let (nx, ny) = (patches_along(hi[0] - lo[0], patch_ft, overlap), patches_along(hi[1] - lo[1], patch_ft, overlap));
    let tol = 1e-9;
    for j in 0..ny {
        for i in 0..nx {
            let anchor = [lo[0] + i as f64 * stride, lo[1] + j as f64 * stride];
            let points: Vec<usize> = (0..cloud.len())
                .filter(|&k| {
                    let p = &cloud.points[k];
                    p.x >= anchor[0] - tol
                        && p.x <= anchor[0] + patch_ft + tol
                        && p.y >= anchor[1] - tol
                        && p.y <= anchor[1] + patch_ft + tol
                })
                .collect();
            if points.is_empty() {
                continue;
            }
            let mut image = RasterImage::blank(anchor, patch_ft, resolution);
            splat(&mut image, cloud, points.iter().copied());
            grid.patches.push(Patch { anchor, image, points });
        }
    }
    Ok(grid)
}

/// Pixel rectangle `[col0, col1] × [row0, row1]` in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub col0: f64,
    pub row0: f64,
    pub col1: f64,
    pub row1: f64,
}

/// Axis-aligned ground rectangle, unbounded in z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundBox {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl GroundBox {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }

    pub fn points_within(&self, cloud: &LabeledCloud) -> Vec<usize> {
        (0..cloud.len()).filter(|&i| self.contains(cloud.points[i].x, cloud.points[i].y)).collect()
    }
}

/// Maps a detection box back to the ground and moves each edge outward by
/// `expand` times the box's extent along that axis.
pub fn backproject_box(grid: &PatchGrid, index: usize, b: &PixelBox, expand: f64) -> Result<GroundBox, RasterError> {
    let patch = grid
        .patches
        .get(index)
        .ok_or(RasterError::IndexOutOfRange { index, count: grid.patches.len() })?;
    let img = &patch.image;
    let (c0, c1) = (b.col0.min(b.col1), b.col0.max(b.col1));
    let (r0, r1) = (b.row0.min(b.row1), b.row0.max(b.row1));
    if c0 < 0.0 || r0 < 0.0 || c1 > img.width as f64 || r1 > img.height as f64 {
        return Err(RasterError::BoxOutsideCanvas { width: img.width, height: img.height });
    }
    if c1 - c0 <= 0.0 || r1 - r0 <= 0.0 {
        return Err(RasterError::DegenerateBox);
    }
    let p = img.transform.apply([c0, r0]);
    let q = img.transform.apply([c1, r1]);
    let (mut min, mut max) = ([p[0].min(q[0]), p[1].min(q[1])], [p[0].max(q[0]), p[1].max(q[1])]);
    for k in 0..2 {
        let grow = expand * (max[k] - min[k]);
        min[k] -= grow;
        max[k] += grow;
    }
    Ok(GroundBox { min, max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{ComponentLabel, Point3};
    use proptest::prelude::*;

    fn cloud_of(points: Vec<Point3>) -> LabeledCloud {
        let labels = vec![ComponentLabel::Unassigned; points.len()];
        LabeledCloud::new("t", points, labels).unwrap()
    }

    #[test]
    fn transform_inverts() {
        let img = RasterImage::blank([3.0, -2.0], 10.0, 64);
        let inv = img.inverse();
        for p in [[0.0, 0.0], [12.5, 7.25], [64.0, 64.0]] {
            let q = inv.apply(img.transform.apply(p));
            assert!((q[0] - p[0]).abs() < 1e-9 && (q[1] - p[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn single_point_lands_in_center() {
        let img = project_topdown(&cloud_of(vec![Point3::with_intensity(4.0, 4.0, 0.0, 1.0)]), 64, 10.0);
        assert_eq!(img.nonzero(), 1);
        assert_eq!(img.get(32, 32), 255);
    }

    #[test]
    fn last_point_wins() {
        let pts = vec![
            Point3::with_intensity(0.0, 0.0, 0.0, 0.0),
            Point3::with_intensity(0.1, 0.1, 0.0, 0.2),
            Point3::with_intensity(0.11, 0.11, 0.0, 0.6),
        ];
        let img = project_topdown(&cloud_of(pts), 16, 4.0);
        assert_eq!(img.nonzero(), 1);
        assert_eq!(img.pixels.iter().copied().max(), Some(153));
    }

    #[test]
    fn grid_fills_one_pixel_per_point() {
        // A 20×20 grid at pixel-centre spacing on a 40 px canvas.
        let pts: Vec<Point3> = (0..20)
            .flat_map(|i| (0..20).map(move |j| Point3::with_intensity(0.25 + 0.5 * i as f64, 0.25 + 0.5 * j as f64, 0.0, 1.0)))
            .collect();
        let img = project_topdown(&cloud_of(pts), 40, 20.0);
        assert_eq!(img.nonzero(), 400);
    }

    #[test]
    fn kernel_formula() {
        assert_eq!(dilation_kernel(1.0, 50), 0);
        assert_eq!(dilation_kernel(0.01, 50), 50);
        assert_eq!(dilation_kernel(0.0, 50), 50);
        assert_eq!(dilation_kernel(0.1, 50), 5);
        assert_eq!(dilation_kernel(0.2, 3), 2);
    }

    #[test]
    fn dense_tile_only_gets_global_dilation() {
        let mut img = RasterImage::blank([0.0, 0.0], 1.0, 8);
        img.pixels.iter_mut().for_each(|p| *p = 10);
        img.pixels[27] = 200;
        let out = adaptive_dilate(&img, 8, 50).unwrap();
        // The side-2 kernel reaches one pixel back along each axis.
        let lit: Vec<usize> = (0..64).filter(|&i| out.pixels[i] == 200).collect();
        assert_eq!(lit, vec![27, 28, 35, 36]);
    }

    #[test]
    fn sparse_tile_grows_by_kernel() {
        let mut img = RasterImage::blank([0.0, 0.0], 1.0, 32);
        img.pixels[16 * 32 + 16] = 99;
        // Density 1/1024 clips to the maximum kernel 5, then the global side-2 pass adds one.
        let out = adaptive_dilate(&img, 32, 5).unwrap();
        assert_eq!(out.nonzero(), 36);
        assert_eq!(out.get(14, 14), 99);
        assert_eq!(out.get(19, 19), 99);
        assert_eq!(out.get(13, 16), 0);
    }

    #[test]
    fn empty_image_is_rejected() {
        let img = RasterImage { width: 0, height: 0, pixels: vec![], transform: Affine2([1.0, 0.0, 0.0, 0.0, -1.0, 0.0]) };
        assert!(matches!(adaptive_dilate(&img, 4, 3), Err(RasterError::EmptyImage)));
    }

    #[test]
    fn tiling_counts() {
        assert_eq!(patches_along(20.0, 10.0, 0.5), 3);
        assert_eq!(patches_along(5.0, 10.0, 0.5), 1);
        assert_eq!(patches_along(10.0, 10.0, 0.0), 1);
        assert_eq!(patches_along(10.5, 10.0, 0.0), 2);
        let pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(20.0, 3.0, 0.0)];
        let grid = tile_patches(&cloud_of(pts), 10.0, 0.5, 32).unwrap();
        assert_eq!(grid.patches.len(), 2);
    }

    #[test]
    fn boundary_point_in_both_patches() {
        let pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(5.0, 1.0, 0.0), Point3::new(15.0, 1.0, 0.0)];
        let grid = tile_patches(&cloud_of(pts), 10.0, 0.0, 16).unwrap();
        assert_eq!(grid.patches.len(), 2);
        let cloud2 = cloud_of(vec![Point3::new(0.0, 0.0, 0.0), Point3::new(10.0, 1.0, 0.0), Point3::new(15.0, 1.0, 0.0)]);
        let grid = tile_patches(&cloud2, 10.0, 0.0, 16).unwrap();
        assert!(grid.patches.iter().all(|p| p.points.contains(&1)));
    }

    #[test]
    fn backprojection() {
        let grid = tile_patches(&cloud_of(vec![Point3::new(0.0, 0.0, 0.0), Point3::new(20.0, 20.0, 0.0)]), 20.0, 0.5, 100)
            .unwrap();
        let full = PixelBox { col0: 0.0, row0: 0.0, col1: 100.0, row1: 100.0 };
        let g = backproject_box(&grid, 0, &full, 0.0).unwrap();
        assert_eq!((g.min, g.max), ([0.0, 0.0], [20.0, 20.0]));
        let b = PixelBox { col0: 25.0, row0: 25.0, col1: 75.0, row1: 75.0 };
        let g = backproject_box(&grid, 0, &b, 0.1).unwrap();
        assert!((g.max[0] - g.min[0] - 12.0).abs() < 1e-9 && (g.max[1] - g.min[1] - 12.0).abs() < 1e-9);
        assert!(((g.max[0] + g.min[0]) / 2.0 - 10.0).abs() < 1e-9);
        let flat = PixelBox { col0: 5.0, row0: 5.0, col1: 5.0, row1: 9.0 };
        assert!(matches!(backproject_box(&grid, 0, &flat, 0.1), Err(RasterError::DegenerateBox)));
        assert!(matches!(backproject_box(&grid, 7, &full, 0.1), Err(RasterError::IndexOutOfRange { .. })));
    }

    #[test]
    fn pgm_header_and_sidecar() {
        let grid = tile_patches(&cloud_of(vec![Point3::with_intensity(1.0, 1.0, 0.0, 0.5)]), 4.0, 0.5, 8).unwrap();
        let mut buf = Vec::new();
        grid.patches[0].image.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n8 8\n255\n"));
        assert_eq!(buf.len(), 11 + 64);
        let meta = grid.meta(0).unwrap();
        let back: PatchMeta = serde_json::from_str(&serde_json::to_string(&meta).unwrap()).unwrap();
        assert_eq!(back, meta);
    }

    /// Scalar reference of the per-tile rule, independent of the separable implementation.
    fn reference_dilate(img: &RasterImage, patch_px: usize, kmax: usize) -> Vec<u8> {
        let (w, h) = (img.width, img.height);
        let square = |src: &[u8], c: usize, r: usize, k: usize| -> u8 {
            let back = k / 2;
            let fwd = k - 1 - back;
            let mut m = 0;
            for rr in r.saturating_sub(back)..=(r + fwd).min(h - 1) {
                for cc in c.saturating_sub(back)..=(c + fwd).min(w - 1) {
                    m = m.max(src[rr * w + cc]);
                }
            }
            m
        };
        let mut local = img.pixels.clone();
        for r in 0..h {
            for c in 0..w {
                let (tr, tc) = (r / patch_px * patch_px, c / patch_px * patch_px);
                let (r1, c1) = ((tr + patch_px).min(h), (tc + patch_px).min(w));
                let mut nz = 0;
                for rr in tr..r1 {
                    for cc in tc..c1 {
                        nz += (img.pixels[rr * w + cc] != 0) as usize;
                    }
                }
                let rho = nz as f64 / ((r1 - tr) * (c1 - tc)) as f64;
                let k = if rho == 0.0 { kmax } else { ((1.0 / (2.0 * rho)).floor() as usize).min(kmax) };
                if k > 1 {
                    local[r * w + c] = square(&img.pixels, c, r, k);
                }
            }
        }
        (0..h).flat_map(|r| (0..w).map(move |c| (c, r))).map(|(c, r)| square(&local, c, r, 2)).collect()
    }

    proptest! {
        #[test]
        fn matches_reference_and_is_monotone(
            seeds in proptest::collection::vec((0usize..23, 0usize..19, 1u8..=255), 0..40),
            patch in 3usize..9, kmax in 1usize..8,
        ) {
            let mut img = RasterImage::blank([0.0, 0.0], 1.0, 1);
            img.width = 23;
            img.height = 19;
            img.pixels = vec![0; 23 * 19];
            for (c, r, v) in seeds {
                img.pixels[r * 23 + c] = v;
            }
            let out = adaptive_dilate(&img, patch, kmax).unwrap();
            prop_assert_eq!(&out.pixels, &reference_dilate(&img, patch, kmax));
            for (a, b) in img.pixels.iter().zip(&out.pixels) {
                prop_assert!(b >= a);
            }
            prop_assert!(tile_kernels(&img, patch, kmax).iter().all(|&k| k <= kmax));
        }

        #[test]
        fn projected_pixels_map_back_near_their_points(x in -30.0f64..30.0, y in -30.0f64..30.0) {
            let cloud = cloud_of(vec![Point3::new(-30.0, -30.0, 0.0), Point3::new(30.0, 30.0, 0.0), Point3::new(x, y, 0.0)]);
            let img = project_topdown(&cloud, 200, 60.0);
            let (c, r) = img.pixel_of(x, y).unwrap();
            let q = img.center_of(c, r);
            let px = 60.0 / 200.0;
            prop_assert!((q[0] - x).abs() <= px && (q[1] - y).abs() <= px);
        }

        #[test]
        fn every_point_is_tiled(pts in proptest::collection::vec((-40.0f64..40.0, -40.0f64..40.0), 1..60),
                                patch in 3.0f64..25.0, overlap in 0.0f64..0.9) {
            let cloud = cloud_of(pts.iter().map(|&(x, y)| Point3::new(x, y, 0.0)).collect());
            let grid = tile_patches(&cloud, patch, overlap, 16).unwrap();
            for i in 0..cloud.len() {
                prop_assert!(grid.patches.iter().any(|p| p.points.contains(&i)));
            }
            for (k, p) in grid.patches.iter().enumerate() {
                let g = backproject_box(&grid, k, &PixelBox { col0: 3.0, row0: 5.0, col1: 4.0, row1: 6.0 }, 0.0).unwrap();
                prop_assert!(g.min[0] >= p.anchor[0] - 1e-9 && g.max[0] <= p.anchor[0] + patch + 1e-9);
                prop_assert!(g.min[1] >= p.anchor[1] - 1e-9 && g.max[1] <= p.anchor[1] + patch + 1e-9);
            }
        }
    }
}
