use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mesh::Vec3;
use crate::error::{Error, Result};

pub const DEFAULT_FOV_DEG: f64 = 45.0;
/// Positions closer than this to the origin are resampled.
pub const MIN_CAMERA_RADIUS: f64 = 1.05;

/// Pinhole camera with the image plane at unit focal distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    pub up: [f64; 3],
    pub fov_deg: f64,
}

impl CameraPose {
    pub fn new(position: Vec3, look_at: Vec3, up: Vec3, fov_deg: f64) -> Result<Self> {
        let fwd = look_at - position;
        if fwd.norm() < 1e-12 {
            return Err(Error::InvalidArgument("camera position equals look_at".into()));
        }
        let up = up.try_normalize(1e-12).ok_or_else(|| Error::InvalidArgument("zero up vector".into()))?;
        if fwd.normalize().cross(&up).norm() < 1e-9 {
            return Err(Error::InvalidArgument("up vector parallel to view direction".into()));
        }
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(Error::InvalidArgument(format!("fov {fov_deg} outside (0, 180)")));
        }
        Ok(CameraPose {
            position: position.into(),
            look_at: look_at.into(),
            up: up.into(),
            fov_deg,
        })
    }

    /// Camera at `position` aimed at the origin with +y up (or +z when
    /// looking straight along y).
    pub fn looking_at_origin(position: Vec3) -> Result<Self> {
        let dir = -position.normalize();
        let up = if dir.y.abs() > 0.999 { Vec3::z() } else { Vec3::y() };
        CameraPose::new(position, Vec3::zeros(), up, DEFAULT_FOV_DEG)
    }

    pub fn position(&self) -> Vec3 {
        Vec3::from(self.position)
    }

    /// Orthonormal (right, true_up, forward) frame.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let fwd = (Vec3::from(self.look_at) - self.position()).normalize();
        let right = fwd.cross(&Vec3::from(self.up)).normalize();
        let up = right.cross(&fwd);
        (right, up, fwd)
    }

    /// Unit direction through the center of pixel (row, col).
    pub fn ray_dir(&self, row: usize, col: usize, height: usize, width: usize) -> Vec3 {
        let (right, up, fwd) = self.basis();
        self.ray_dir_in(&(right, up, fwd), row, col, height, width)
    }

    pub(crate) fn ray_dir_in(&self, basis: &(Vec3, Vec3, Vec3), row: usize, col: usize, height: usize, width: usize) -> Vec3 {
        let (right, up, fwd) = basis;
        let half = (self.fov_deg.to_radians() * 0.5).tan();
        let aspect = width as f64 / height as f64;
        let sx = ((col as f64 + 0.5) / width as f64 * 2.0 - 1.0) * half * aspect;
        let sy = (1.0 - (row as f64 + 0.5) / height as f64 * 2.0) * half;
        (fwd + right * sx + up * sy).normalize()
    }
}

/// Gaussian-perturbed camera positions around `mean_radius`, all aimed at
/// the origin.
pub fn sample_camera_poses(seed: u64, count: usize, mean_radius: f64, sigma: f64) -> Result<Vec<CameraPose>> {
    if count == 0 {
        return Err(Error::InvalidArgument("camera count must be at least 1".into()));
    }
    if !(mean_radius > 1.0) || !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need mean_radius > 1 and sigma >= 0, got {mean_radius} and {sigma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss3 = |rng: &mut ChaCha8Rng| {
        Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        )
    };
    let mut poses = Vec::with_capacity(count);
    while poses.len() < count {
        let g = gauss3(&mut rng);
        let Some(dir) = g.try_normalize(1e-12) else { continue };
        let p = dir * mean_radius + gauss3(&mut rng) * sigma;
        if p.norm() < MIN_CAMERA_RADIUS {
            continue;
        }
        poses.push(CameraPose::looking_at_origin(p)?);
    }
    Ok(poses)
}

/// `count` cameras evenly spaced in azimuth around the y axis at the given
/// radius and elevation, starting on +z.
pub fn orbit_poses(count: usize, radius: f64, elevation_deg: f64) -> Result<Vec<CameraPose>> {
    let el = elevation_deg.to_radians();
    (0..count)
        .map(|i| {
            let az = std::f64::consts::TAU * i as f64 / count as f64;
            let p = Vec3::new(az.sin() * el.cos(), el.sin(), az.cos() * el.cos()) * radius;
            CameraPose::looking_at_origin(p)
        })
        .collect()
}
