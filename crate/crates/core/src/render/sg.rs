use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Smallest sharpness fed to the clamped-cosine integral.
pub const MIN_SHARPNESS: f64 = 1e-3;
const BAND_NODES: usize = 32;

/// Spherical Gaussian light lobe `mu * exp(lambda * (axis . w - 1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SGLight {
    pub axis: [f64; 3],
    pub sharpness: f64,
    pub amplitude: [f64; 3],
}

impl SGLight {
    pub fn new(axis: Vec3, sharpness: f64, amplitude: [f64; 3]) -> Result<Self> {
        let axis = axis
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidArgument("zero light axis".into()))?;
        if !(1.0..=1e4).contains(&sharpness) {
            return Err(Error::InvalidArgument(format!("sharpness {sharpness} outside [1, 1e4]")));
        }
        if amplitude.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::InvalidArgument(format!("negative or non-finite amplitude {amplitude:?}")));
        }
        Ok(SGLight {
            axis: axis.into(),
            sharpness,
            amplitude,
        })
    }

    pub fn axis(&self) -> Vec3 {
        Vec3::from(self.axis)
    }
}

pub fn sg_eval(light: &SGLight, w: &Vec3) -> [f64; 3] {
    let k = (light.sharpness * (light.axis().dot(w) - 1.0)).exp();
    light.amplitude.map(|m| m * k)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

struct Band {
    sin: Vec<f64>,
    cos: Vec<f64>,
    w: Vec<f64>,
}

fn band() -> &'static Band {
    static B: OnceLock<Band> = OnceLock::new();
    B.get_or_init(|| {
        let (x, w) = gauss_legendre(BAND_NODES);
        Band {
            sin: x.iter().map(|t| (t * FRAC_PI_2).sin()).collect(),
            cos: x.iter().map(|t| (t * FRAC_PI_2).cos()).collect(),
            w: w.iter().map(|v| v * FRAC_PI_2).collect(),
        }
    })
}

// antiderivative of u * exp(l (u - 1)) and its l-derivative
fn g(u: f64, l: f64) -> (f64, f64) {
    let e = (l * (u - 1.0)).exp();
    let p = u / l - 1.0 / (l * l);
    let dp = -u / (l * l) + 2.0 / (l * l * l);
    (e * p, (u - 1.0) * e * p + e * dp)
}

/// Integral over the sphere of `exp(lambda (xi . w - 1)) * max(0, w . n)`
/// as a function of sharpness and `c = xi . n`, with its partials
/// `(value, d/dc, d/dlambda)`.
///
/// Slicing the sphere by `u = xi . w`, the slices where the cosine never
/// clips integrate in closed form; the clipped band `|u| < sqrt(1 - c^2)`
/// uses fixed Gauss-Legendre quadrature in `u = s sin(theta)`.
pub fn clamped_cosine_integral(lambda: f64, c: f64) -> (f64, f64, f64) {
    let l = lambda.max(MIN_SHARPNESS);
    let c = c.clamp(-1.0, 1.0);
    let s = (1.0 - c * c).max(0.0).sqrt();
    let (a, b) = if c >= 0.0 { (s, 1.0) } else { (-1.0, -s) };
    let (ga, gla) = g(a, l);
    let (gb, glb) = g(b, l);
    let mut val = TAU * c * (gb - ga);
    // the moving endpoint of the unclipped region contributes through s(c)
    let edge = if c >= 0.0 {
        TAU * c * c * (l * (s - 1.0)).exp()
    } else {
        -TAU * c * c * (-l * (s + 1.0)).exp()
    };
    let mut dc = TAU * (gb - ga) + edge;
    let mut dl = TAU * c * (glb - gla);
    if s > 0.0 {
        let q = band();
        let dsdc = -c / s;
        for k in 0..BAND_NODES {
            let (st, ct) = (q.sin[k], q.cos[k]);
            let u = s * st;
            let dudc = st * dsdc;
            let sq = (1.0 - u * u).max(0.0).sqrt();
            let (phi, dphi) = if sq > 0.0 {
                let ratio = (-st * c / sq).clamp(-1.0, 1.0);
                let d = if ratio.abs() < 1.0 {
                    let drho = -st / sq - st * c * u * dudc / (sq * sq * sq);
                    -drho / (1.0 - ratio * ratio).sqrt()
                } else {
                    0.0
                };
                (ratio.acos(), d)
            } else {
                (FRAC_PI_2, 0.0)
            };
            let e = (l * (u - 1.0)).exp() * q.w[k];
            let h = 2.0 * (u * c * phi + s * ct);
            let dh = 2.0 * (dudc * c * phi + u * phi + u * c * dphi + dsdc * ct);
            val += e * h * s * ct;
            dc += e * ct * (l * dudc * h * s + dh * s + h * dsdc);
            dl += e * (u - 1.0) * h * s * ct;
        }
    }
    if lambda < MIN_SHARPNESS {
        dl = 0.0;
    }
    (val, dc, dl)
}
