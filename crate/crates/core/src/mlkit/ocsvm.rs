use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::MlError;
use crate::cloud::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcsvmParams {
    pub nu: f64,
    /// RBF coefficient; `None` derives it from the input spread.
    pub gamma: Option<f64>,
    pub max_train: usize,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for OcsvmParams {
    fn default() -> Self {
        Self { nu: 0.7, gamma: None, max_train: 2000, tolerance: 1e-4, max_iter: 1_000_000 }
    }
}

/// Trained one-class SVM with an RBF kernel. Only vectors with a positive
/// dual coefficient are kept.
#[derive(Debug, Clone)]
pub struct OcsvmModel {
    pub support: Vec<Vec3>,
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub iterations: usize,
}

impl OcsvmModel {
    pub fn decision(&self, x: &Vec3) -> f64 {
        let mut s = 0.0;
        for (sv, a) in self.support.iter().zip(&self.alpha) {
            s += a * (-self.gamma * (sv - x).norm_squared()).exp();
        }
        s - self.rho
    }
}

/// `1 / (3 σ²)` where σ² is the mean squared deviation of all coordinates
/// about the centroid, pooled over the three axes.
pub fn default_gamma(points: &[Vec3]) -> Result<f64, MlError> {
    if points.len() < 2 {
        return Err(MlError::TooFewPoints { got: points.len(), need: 2 });
    }
    let n = points.len() as f64;
    let c: Vec3 = points.iter().sum::<Vec3>() / n;
    let var = points.iter().map(|p| (p - c).norm_squared()).sum::<f64>() / (3.0 * n);
    if !(var > 0.0) {
        return Err(MlError::ZeroVariance);
    }
    Ok(1.0 / (3.0 * var))
}

/// Solves the one-class dual `min ½ αᵀKα` subject to `0 ≤ α ≤ 1/(νn)`,
/// `Σα = 1` with SMO, using second-order working-set selection.
pub fn ocsvm_fit(points: &[Vec3], params: &OcsvmParams, seed: u64) -> Result<OcsvmModel, MlError> {
    let nu = params.nu;
    if !(nu > 0.0 && nu < 1.0) {
        return Err(MlError::InvalidNu(nu));
    }
    if points.len() < 10 {
        return Err(MlError::TooFewPoints { got: points.len(), need: 10 });
    }
    let gamma = match params.gamma {
        Some(g) if g > 0.0 && g.is_finite() => g,
        Some(g) => return Err(MlError::InvalidParameter(format!("gamma must be positive, got {g}"))),
        None => default_gamma(points)?,
    };
    let train: Vec<Vec3> = if points.len() > params.max_train {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, points.len(), params.max_train).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| points[i]).collect()
    } else {
        points.to_vec()
    };
    let n = train.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in 0..i {
            let v = (-gamma * (train[i] - train[j]).norm_squared()).exp();
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }

    let c = 1.0 / (nu * n as f64);
    let mut alpha = vec![0.0; n];
    let full = ((nu * n as f64).floor() as usize).min(n);
    for a in alpha.iter_mut().take(full) {
        *a = c;
    }
    if full < n {
        alpha[full] = (1.0 - full as f64 * c).max(0.0);
    }
    let mut grad = vec![0.0; n];
    for (j, &a) in alpha.iter().enumerate().filter(|(_, &a)| a > 0.0) {
        for i in 0..n {
            grad[i] += a * k[i * n + j];
        }
    }

    let tau = 1e-12;
    let mut iterations = 0;
    loop {
        // i: largest -G among indices that may increase.
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        for t in 0..n {
            if alpha[t] < c && -grad[t] > gmax {
                gmax = -grad[t];
                i = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for t in 0..n {
            if alpha[t] <= 0.0 {
                continue;
            }
            gmin = gmin.min(-grad[t]);
            if i == usize::MAX {
                continue;
            }
            let b = gmax + grad[t];
            if b > 0.0 {
                let a = (k[i * n + i] + k[t * n + t] - 2.0 * k[i * n + t]).max(tau);
                let gain = b * b / a;
                if gain > best {
                    best = gain;
                    j = t;
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < params.tolerance {
            break;
        }
        if iterations >= params.max_iter {
            return Err(MlError::NonConvergence { iterations });
        }
        iterations += 1;

        let a = (k[i * n + i] + k[j * n + j] - 2.0 * k[i * n + j]).max(tau);
        let mut d = (grad[j] - grad[i]) / a;
        d = d.min(c - alpha[i]).min(alpha[j]);
        alpha[i] += d;
        alpha[j] -= d;
        if c - alpha[i] < 1e-15 * c {
            alpha[i] = c;
        }
        if alpha[j] < 1e-15 * c {
            alpha[j] = 0.0;
        }
        for t in 0..n {
            grad[t] += d * (k[t * n + i] - k[t * n + j]);
        }
    }

    let mut free_sum = 0.0;
    let mut free = 0usize;
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        if alpha[t] >= c {
            lb = lb.max(grad[t]);
        } else if alpha[t] <= 0.0 {
            ub = ub.min(grad[t]);
        } else {
            free += 1;
            free_sum += grad[t];
        }
    }
    let rho = if free > 0 { free_sum / free as f64 } else { 0.5 * (ub + lb) };

    let (support, coef): (Vec<Vec3>, Vec<f64>) =
        train.iter().zip(&alpha).filter(|(_, &a)| a > 0.0).map(|(p, &a)| (*p, a)).unzip();
    Ok(OcsvmModel { support, alpha: coef, rho, gamma, iterations })
}

/// Indices of the points with a non-negative decision value.
pub fn ocsvm_coreset(model: &OcsvmModel, points: &[Vec3]) -> Vec<usize> {
    (0..points.len()).filter(|&i| model.decision(&points[i]) >= 0.0).collect()
}
