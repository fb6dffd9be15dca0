use serde::Serialize;

use super::scene::Scene;
use super::step::Lighting;
use crate::autodiff::{Tape, Tensor};
use crate::embed::{color_target, encode_images, EmbeddingProvider};
use crate::error::Result;
use crate::geometry::orbit_poses;
use crate::render::{render_views, Image, PointBatch, DEFAULT_BACKGROUND};
use crate::stylefield::StyleField;
use crate::supervision::{coarse_value, fine_value};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSpec {
    pub views: usize,
    pub resolution: usize,
    pub radius: f64,
    pub elevation_deg: f64,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec {
            views: 8,
            resolution: 64,
            radius: 2.5,
            elevation_deg: 20.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ObjectReport {
    pub cluster: usize,
    pub phrase: usize,
    pub text: String,
    pub points: usize,
    pub mean_diffuse: [f64; 3],
    pub target_word: Option<String>,
    pub target: Option<[f64; 3]>,
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub provider: String,
    /// What the similarity numbers mean under the active provider.
    pub similarity_note: String,
    /// Cosine between the mean view feature and the prompt feature.
    pub sentence_similarity: f64,
    /// Softmax-weighted view/word similarity, the negated fine loss.
    pub word_similarity: f64,
    pub views: Vec<String>,
    pub objects: Vec<ObjectReport>,
}

/// Name of the view at `index` of `count` evenly spaced azimuths.
pub fn view_name(index: usize, count: usize) -> String {
    format!("view_{:03}", index * 360 / count)
}

/// Renders evenly spaced views of the field and scores them against the
/// prompt. Returns the report and the named renders.
pub fn evaluate(
    field: &StyleField,
    scene: &Scene,
    provider: &dyn EmbeddingProvider,
    lighting: &Lighting,
    spec: &EvalSpec,
) -> Result<(EvalReport, Vec<(String, Image)>)> {
    let res = spec.resolution;
    let poses = orbit_poses(spec.views, spec.radius, spec.elevation_deg)?;
    let buffers: Vec<_> = poses.iter().map(|p| scene.raycaster.geometry_pass(p, res, res)).collect();
    let batch = PointBatch::from_buffers(&buffers)?;
    let (assignment, graph) = scene.graph_for(&batch.point_list())?;
    let lights: Vec<_> = poses.iter().map(|p| lighting.for_pose(p)).collect();

    let mut t = Tape::new();
    let vars = field.bind_constant(&mut t);
    let words = t.constant(scene.words.clone());
    let out = render_views(&mut t, field, &vars, &buffers, &batch, &graph, words, &lights, DEFAULT_BACKGROUND)?;
    let images = out
        .images
        .iter()
        .map(|v| Image::from_tensor(res, res, t.value(*v)))
        .collect::<Result<Vec<_>>>()?;
    let diffuse = t.value(out.field.diffuse).clone();

    let feats = encode_images(provider, &images)?;
    let (n, d) = feats.dims2()?;
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| feats.at2(i, j)).sum::<f64>() / n as f64).collect();
    let sentence_similarity = -coarse_value(&mean, &scene.global_text)?;
    let word_similarity = -fine_value(&feats, &scene.words)?;

    let objects = object_reports(scene, &assignment.cluster_of_point, &diffuse, provider.color_targets());
    let names: Vec<String> = (0..spec.views).map(|i| view_name(i, spec.views)).collect();
    let report = EvalReport {
        provider: provider.describe(),
        similarity_note: "provider-space similarity between renders and prompt, not a CLIP score".into(),
        sentence_similarity,
        word_similarity,
        views: names.clone(),
        objects,
    };
    Ok((report, names.into_iter().zip(images).collect()))
}

fn object_reports(scene: &Scene, labels: &[usize], diffuse: &Tensor, with_targets: bool) -> Vec<ObjectReport> {
    (0..scene.num_objects())
        .map(|c| {
            let mut sum = [0.0; 3];
            let mut count = 0usize;
            for (i, _) in labels.iter().enumerate().filter(|(_, &l)| l == c) {
                for (s, v) in sum.iter_mut().zip(diffuse.row(i)) {
                    *s += v;
                }
                count += 1;
            }
            let mean_diffuse = sum.map(|s| if count > 0 { s / count as f64 } else { f64::NAN });
            let phrase = &scene.phrases[scene.phrase_of_cluster[c]];
            let target = with_targets
                .then(|| {
                    phrase
                        .adjectives
                        .iter()
                        .chain(std::iter::once(&phrase.head_noun))
                        .find_map(|w| color_target(w).map(|rgb| (w.clone(), rgb)))
                })
                .flatten();
            let distance = target.as_ref().map(|(_, rgb)| {
                mean_diffuse
                    .iter()
                    .zip(rgb)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            });
            ObjectReport {
                cluster: c,
                phrase: phrase.phrase_id,
                text: phrase.text(),
                points: count,
                mean_diffuse,
                target_word: target.as_ref().map(|t| t.0.clone()),
                target: target.map(|t| t.1),
                distance,
            }
        })
        .collect()
}
