use nalgebra::{Matrix3, SymmetricEigen};

use super::MlError;
use crate::cloud::{Line3, Plane, Point3, Vec3};

/// Centroid and scatter matrix of a point set.
fn scatter<'a, I>(points: I) -> (Vec3, Matrix3<f64>, usize)
where
    I: Iterator<Item = &'a Vec3> + Clone,
{
    let mut n = 0usize;
    let mut sum = Vec3::zeros();
    for p in points.clone() {
        sum += p;
        n += 1;
    }
    let centroid = if n > 0 { sum / n as f64 } else { sum };
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    (centroid, cov, n)
}

/// Eigenpairs sorted by ascending eigenvalue.
fn sorted_eigen(cov: Matrix3<f64>) -> ([f64; 3], [Vec3; 3]) {
    let eig = SymmetricEigen::new(cov);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = [eig.eigenvalues[idx[0]], eig.eigenvalues[idx[1]], eig.eigenvalues[idx[2]]];
    let vecs = [
        eig.eigenvectors.column(idx[0]).into_owned(),
        eig.eigenvectors.column(idx[1]).into_owned(),
        eig.eigenvectors.column(idx[2]).into_owned(),
    ];
    (vals, vecs)
}

/// Total-least-squares plane: the normal is the eigenvector of the smallest
/// eigenvalue of the centered scatter matrix. The normal is oriented with
/// `z >= 0`; ties fall back to `x >= 0`, then `y >= 0`.
pub fn fit_plane(points: &[Vec3]) -> Result<Plane, MlError> {
    fit_plane_iter(points.iter())
}

pub(crate) fn fit_plane_iter<'a, I>(points: I) -> Result<Plane, MlError>
where
    I: Iterator<Item = &'a Vec3> + Clone,
{
    let (centroid, cov, n) = scatter(points);
    if n < 3 {
        return Err(MlError::DegenerateGeometry(format!("plane fit needs 3 points, got {n}")));
    }
    let (vals, vecs) = sorted_eigen(cov);
    let scale = vals[2].max(f64::MIN_POSITIVE);
    if vals[1] <= 1e-12 * scale || vals[2] <= 0.0 {
        return Err(MlError::DegenerateGeometry("points are collinear or coincident".into()));
    }
    let mut normal = vecs[0].normalize();
    let flip = if normal.z.abs() > 1e-12 {
        normal.z < 0.0
    } else if normal.x.abs() > 1e-12 {
        normal.x < 0.0
    } else {
        normal.y < 0.0
    };
    if flip {
        normal = -normal;
    }
    Ok(Plane { normal, offset: -normal.dot(&centroid) })
}

pub fn point_plane_distance(p: &Point3, plane: &Plane) -> f64 {
    plane.signed_distance(&p.vec())
}

/// Total-least-squares 3D line through the centroid along the principal axis.
pub fn fit_line3(points: &[Vec3]) -> Result<Line3, MlError> {
    let (centroid, cov, n) = scatter(points.iter());
    if n < 2 {
        return Err(MlError::DegenerateGeometry(format!("line fit needs 2 points, got {n}")));
    }
    let (vals, vecs) = sorted_eigen(cov);
    if vals[2] <= 0.0 {
        return Err(MlError::DegenerateGeometry("points are coincident".into()));
    }
    Line3::new(centroid, vecs[2]).ok_or_else(|| MlError::DegenerateGeometry("zero direction".into()))
}

/// Orthonormal in-plane basis `(u, v)` for a plane normal, used to express
/// projected points in 2D.
pub fn plane_frame(normal: &Vec3) -> (Vec3, Vec3) {
    let helper = if normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = normal.cross(&helper).normalize();
    let v = normal.cross(&u).normalize();
    (u, v)
}
