use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub const COVARIANCE_FLOOR: f64 = 1e-6;
pub const MAX_EM_ITERS: usize = 200;
pub const EM_TOL: f64 = 1e-6;

/// Full-covariance Gaussian mixture in 3D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub k: usize,
    pub means: Vec<[f64; 3]>,
    /// Row-major 3x3 covariances.
    pub covariances: Vec<[[f64; 3]; 3]>,
    pub weights: Vec<f64>,
    /// Log-likelihood after each EM iteration.
    pub log_likelihood: Vec<f64>,
}

fn floor_covariance(c: &Matrix3<f64>) -> Matrix3<f64> {
    let sym = (c + c.transpose()) * 0.5;
    let mut e = SymmetricEigen::new(sym);
    for v in e.eigenvalues.iter_mut() {
        *v = v.max(COVARIANCE_FLOOR);
    }
    e.recompose()
}

struct Component {
    mean: Vec3,
    inv: Matrix3<f64>,
    log_norm: f64,
}

impl GmmModel {
    fn components(&self) -> Vec<Component> {
        (0..self.k)
            .map(|j| {
                let c = Matrix3::from_fn(|r, s| self.covariances[j][r][s]);
                let det = c.determinant().max(f64::MIN_POSITIVE);
                Component {
                    mean: Vec3::from(self.means[j]),
                    inv: c.try_inverse().unwrap_or_else(Matrix3::identity),
                    log_norm: self.weights[j].max(f64::MIN_POSITIVE).ln() - 0.5 * (det.ln() + 3.0 * (2.0 * PI).ln()),
                }
            })
            .collect()
    }

    /// `log(w_j N(x | mu_j, Sigma_j))` for every component.
    pub fn log_weighted_densities(&self, x: &Vec3) -> Vec<f64> {
        self.components().iter().map(|c| log_density(c, x)).collect()
    }
}

fn log_density(c: &Component, x: &Vec3) -> f64 {
    let d = x - c.mean;
    c.log_norm - 0.5 * d.dot(&(c.inv * d))
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn kmeans_pp(points: &[Vec3], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let mut centers = vec![points[rng.gen_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| (p - centers[0]).norm_squared()).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..points.len())
        };
        let c = points[idx];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min((p - c).norm_squared());
        }
        centers.push(c);
    }
    centers
}

/// EM fit with k-means++ seeding; stops when the log-likelihood gains less
/// than `EM_TOL` or after `MAX_EM_ITERS` iterations.
pub fn gmm_fit(points: &[Vec3], k: usize, seed: u64) -> Result<GmmModel> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("cannot fit {k} components to {n} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans_pp(points, k, &mut rng);
    let global_mean = points.iter().sum::<Vec3>() / n as f64;
    let global_cov = points
        .iter()
        .map(|p| (p - global_mean) * (p - global_mean).transpose())
        .sum::<Matrix3<f64>>()
        / n as f64;

    // hard assignment to the seeds gives the starting mixture
    let mut resp = vec![0.0; n * k];
    for (i, p) in points.iter().enumerate() {
        let mut best = 0;
        for j in 1..k {
            if (p - centers[j]).norm_squared() < (p - centers[best]).norm_squared() {
                best = j;
            }
        }
        resp[i * k + best] = 1.0;
    }
    let mut model = GmmModel {
        k,
        means: vec![[0.0; 3]; k],
        covariances: vec![[[0.0; 3]; 3]; k],
        weights: vec![0.0; k],
        log_likelihood: Vec::new(),
    };
    m_step(points, &resp, &centers, &global_cov, &mut model);

    let mut prev = f64::NEG_INFINITY;
    let mut logs = vec![0.0; k];
    for _ in 0..MAX_EM_ITERS {
        let comps = model.components();
        let mut ll = 0.0;
        for (i, p) in points.iter().enumerate() {
            for (j, c) in comps.iter().enumerate() {
                logs[j] = log_density(c, p);
            }
            let z = log_sum_exp(&logs);
            ll += z;
            for j in 0..k {
                resp[i * k + j] = (logs[j] - z).exp();
            }
        }
        model.log_likelihood.push(ll);
        if ll - prev < EM_TOL {
            break;
        }
        prev = ll;
        let means: Vec<Vec3> = model.means.iter().map(|m| Vec3::from(*m)).collect();
        m_step(points, &resp, &means, &global_cov, &mut model);
    }
    Ok(model)
}

fn m_step(points: &[Vec3], resp: &[f64], fallback: &[Vec3], global_cov: &Matrix3<f64>, model: &mut GmmModel) {
    let (n, k) = (points.len(), model.k);
    for j in 0..k {
        let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
        if nk <= 1e-12 {
            model.weights[j] = 1e-12;
            model.means[j] = fallback[j].into();
            model.covariances[j] = to_rows(&floor_covariance(global_cov));
            continue;
        }
        let mean = (0..n).map(|i| points[i] * resp[i * k + j]).sum::<Vec3>() / nk;
        let cov = (0..n)
            .map(|i| {
                let d = points[i] - mean;
                d * d.transpose() * resp[i * k + j]
            })
            .sum::<Matrix3<f64>>()
            / nk;
        model.weights[j] = nk / n as f64;
        model.means[j] = mean.into();
        model.covariances[j] = to_rows(&floor_covariance(&cov));
    }
    let total: f64 = model.weights.iter().sum();
    for w in &mut model.weights {
        *w /= total;
    }
}

fn to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]]
}

/// Most responsible component per point; ties go to the lowest index.
pub fn assign_clusters(model: &GmmModel, points: &[Vec3]) -> Vec<usize> {
    let comps = model.components();
    points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for (j, c) in comps.iter().enumerate() {
                let v = log_density(c, p);
                if v > best_v {
                    best = j;
                    best_v = v;
                }
            }
            best
        })
        .collect()
}
