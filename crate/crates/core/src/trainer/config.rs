use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stylefield::FieldConfig;
use crate::supervision::CgcWeights;

/// Which image features form the rows of the correlation map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FineRows {
    /// One row per augmented crop.
    #[default]
    Crops,
    /// One row per rendered view, averaging its crops.
    Views,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub views_per_iter: usize,
    pub crops_per_view: usize,
    pub crop_scale_min: f64,
    pub crop_scale_max: f64,
    pub resolution: usize,
    pub camera_radius: f64,
    pub camera_sigma: f64,
    pub lambda_c: f64,
    pub lambda_f: f64,
    pub fine_rows: FineRows,
    pub seed: u64,
    pub checkpoint_every: usize,
    /// Orbit views pooled for clustering and matching.
    pub setup_views: usize,
    pub setup_elevation_deg: f64,
    pub field: FieldConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1500,
            lr0: 5e-4,
            lr_decay: 0.7,
            lr_decay_every: 500,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            views_per_iter: 5,
            crops_per_view: 2,
            crop_scale_min: 0.6,
            crop_scale_max: 1.0,
            resolution: 64,
            camera_radius: 2.5,
            camera_sigma: 0.3,
            lambda_c: 1.0,
            lambda_f: 0.33,
            fine_rows: FineRows::Crops,
            seed: 0,
            checkpoint_every: 500,
            setup_views: 8,
            setup_elevation_deg: 20.0,
            field: FieldConfig::default(),
        }
    }
}

fn bad(path: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        msg: msg.into(),
    }
}

impl TrainConfig {
    pub fn weights(&self) -> CgcWeights {
        CgcWeights {
            lambda_c: self.lambda_c,
            lambda_f: self.lambda_f,
        }
    }

    /// Checks every field except the iteration count, which may be zero.
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.lr0) {
            return Err(bad("train.lr0", format!("must be > 0, got {}", self.lr0)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(bad("train.lr_decay", "must be in (0, 1]"));
        }
        if self.lr_decay_every == 0 {
            return Err(bad("train.lr_decay_every", "must be >= 1"));
        }
        for (name, b) in [("train.beta1", self.beta1), ("train.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(bad(name, format!("must be in [0, 1), got {b}")));
            }
        }
        if !pos(self.eps) {
            return Err(bad("train.eps", "must be > 0"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(bad("train.weight_decay", "must be >= 0"));
        }
        if self.views_per_iter == 0 {
            return Err(bad("train.views_per_iter", "must be >= 1"));
        }
        if self.crops_per_view == 0 {
            return Err(bad("train.crops_per_view", "must be >= 1"));
        }
        if !(self.crop_scale_min > 0.0 && self.crop_scale_min <= self.crop_scale_max && self.crop_scale_max <= 1.0) {
            return Err(bad("train.crop_scale_min", "need 0 < crop_scale_min <= crop_scale_max <= 1"));
        }
        if self.resolution < 4 {
            return Err(bad("train.resolution", "must be >= 4"));
        }
        if !(self.camera_radius > 1.05) {
            return Err(bad("train.camera_radius", "cameras must sit outside the unit sphere"));
        }
        if !(self.camera_sigma >= 0.0) {
            return Err(bad("train.camera_sigma", "must be >= 0"));
        }
        if !(self.lambda_c >= 0.0) {
            return Err(bad("train.lambda_c", format!("must be >= 0, got {}", self.lambda_c)));
        }
        if !(self.lambda_f >= 0.0) {
            return Err(bad("train.lambda_f", format!("must be >= 0, got {}", self.lambda_f)));
        }
        if self.setup_views == 0 {
            return Err(bad("train.setup_views", "must be >= 1"));
        }
        if self.checkpoint_every == 0 {
            return Err(bad("train.checkpoint_every", "must be >= 1"));
        }
        Ok(())
    }
}

/// Step schedule: `lr0 * decay^(iter / every)`.
pub fn lr_at(iter: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * cfg.lr_decay.powi((iter / cfg.lr_decay_every) as i32)
}
