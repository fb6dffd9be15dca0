use std::rc::Rc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{FineRows, TrainConfig};
use super::scene::Scene;
use crate::autodiff::{RowMix, Tape, Tensor};
use crate::embed::{policy_rng, sample_crops, AugmentationPolicy, Crop, EmbeddingProvider};
use crate::error::Result;
use crate::geometry::{sample_camera_poses, CameraPose, IntersectionBuffer};
use crate::render::{default_lights, render_views, PointBatch, SGLight, DEFAULT_BACKGROUND};
use crate::sceneparse::CrossModalGraph;
use crate::stylefield::{FieldVars, StyleField};
use crate::supervision::{cgc_loss, coarse_loss, correlation_map, fine_loss, CgcWeights, LossVars};

/// Light rig used for every rendered view.
#[derive(Debug, Clone, Default)]
pub enum Lighting {
    /// Key, fill and back lobes that follow the camera.
    #[default]
    CameraRelative,
    Fixed(Vec<SGLight>),
}

impl Lighting {
    pub fn for_pose(&self, pose: &CameraPose) -> Vec<SGLight> {
        match self {
            Lighting::CameraRelative => default_lights(pose),
            Lighting::Fixed(l) => l.clone(),
        }
    }
}

/// Independent 64-bit seed for stream `tag` at step `index`.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(index);
    rng.next_u64()
}

const CAMERA_STREAM: u64 = 1;
const CROP_STREAM: u64 = 2;

/// Parameter-independent inputs of one step.
pub struct StepBatch {
    pub poses: Vec<CameraPose>,
    pub buffers: Vec<IntersectionBuffer>,
    pub points: PointBatch,
    pub graph: CrossModalGraph,
    pub lights: Vec<Vec<SGLight>>,
    /// `crops_per_view` windows per view, view-major.
    pub crops: Vec<Crop>,
    pub resolution: usize,
}

impl StepBatch {
    /// Camera poses, geometry, graph and crops of iteration `iter`; a pure
    /// function of the seed and the iteration index.
    pub fn sample(scene: &Scene, cfg: &TrainConfig, iter: usize, lighting: &Lighting) -> Result<StepBatch> {
        let poses = sample_camera_poses(
            derive_seed(cfg.seed, CAMERA_STREAM, iter as u64),
            cfg.views_per_iter,
            cfg.camera_radius,
            cfg.camera_sigma,
        )?;
        let res = cfg.resolution;
        let policy = AugmentationPolicy {
            crops_per_view: cfg.crops_per_view,
            scale_min: cfg.crop_scale_min,
            scale_max: cfg.crop_scale_max,
            seed: derive_seed(cfg.seed, CROP_STREAM, 0),
        };
        let crops = sample_crops(&policy, poses.len(), res, res, &mut policy_rng(&policy, iter as u64))?;
        Self::from_poses(scene, poses, res, crops, lighting)
    }

    pub fn from_poses(
        scene: &Scene,
        poses: Vec<CameraPose>,
        resolution: usize,
        crops: Vec<Crop>,
        lighting: &Lighting,
    ) -> Result<StepBatch> {
        let buffers: Vec<_> = poses
            .iter()
            .map(|p| scene.raycaster.geometry_pass(p, resolution, resolution))
            .collect();
        let points = PointBatch::from_buffers(&buffers)?;
        let (_, graph) = scene.graph_for(&points.point_list())?;
        let lights = poses.iter().map(|p| lighting.for_pose(p)).collect();
        Ok(StepBatch {
            poses,
            buffers,
            points,
            graph,
            lights,
            crops,
            resolution,
        })
    }

    pub fn crops_per_view(&self) -> usize {
        self.crops.len() / self.poses.len().max(1)
    }
}

/// Supervision settings of the loss builder.
#[derive(Debug, Clone, Copy)]
pub struct LossSpec {
    pub weights: CgcWeights,
    pub fine_rows: FineRows,
}

impl From<&TrainConfig> for LossSpec {
    fn from(cfg: &TrainConfig) -> Self {
        LossSpec {
            weights: cfg.weights(),
            fine_rows: cfg.fine_rows,
        }
    }
}

/// Render, augment, embed and score one batch. Differentiable in `vars`.
#[allow(clippy::too_many_arguments)]
pub fn step_loss(
    t: &mut Tape,
    field: &StyleField,
    vars: &FieldVars,
    words: &Tensor,
    global_text: &[f64],
    batch: &StepBatch,
    provider: &dyn EmbeddingProvider,
    spec: &LossSpec,
) -> Result<LossVars> {
    let w = t.constant(words.clone());
    let res = batch.resolution;
    let views = render_views(
        t,
        field,
        vars,
        &batch.buffers,
        &batch.points,
        &batch.graph,
        w,
        &batch.lights,
        DEFAULT_BACKGROUND,
    )?;
    let a = batch.crops_per_view();
    let crops = batch
        .crops
        .iter()
        .enumerate()
        .map(|(k, c)| t.row_mix(views.images[k / a], Rc::new(c.mix(res, res))))
        .collect::<Result<Vec<_>>>()?;
    let feats = provider.image_features(t, &crops, res, res)?;
    let rows = match spec.fine_rows {
        FineRows::Crops => feats,
        FineRows::Views => {
            let n = batch.poses.len();
            let mix = RowMix {
                inputs: n * a,
                rows: (0..n).map(|v| (0..a).map(|j| (v * a + j, 1.0 / a as f64)).collect()).collect(),
            };
            t.row_mix(feats, Rc::new(mix))?
        }
    };
    let gi = t.mean_axis(feats, 0)?;
    let gt = t.constant(Tensor::new(vec![1, global_text.len()], global_text.to_vec())?);
    let coarse = coarse_loss(t, gi, gt)?;
    let map = correlation_map(t, rows, w)?;
    let fine = fine_loss(t, &map)?;
    let total = cgc_loss(t, coarse, fine, &spec.weights)?;
    Ok(LossVars { coarse, fine, total })
}
