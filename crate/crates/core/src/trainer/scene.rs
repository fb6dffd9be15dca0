use serde::Serialize;

use crate::autodiff::Tensor;
use crate::embed::{tokenize, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::geometry::{orbit_poses, CameraPose, HitMap, IntersectionBuffer, Mesh, Raycaster, Vec3};
use crate::render::{neutral_render, Image, DEFAULT_BACKGROUND};
use crate::sceneparse::{
    assign_clusters, build_graph, decouple_hitmap, extract_noun_phrases, gmm_fit, mask_image, match_phrases_to_clusters,
    phrase_embeddings, similarity_matrix, CrossModalGraph, GmmModel, NounPhrase, ObjectAssignment,
};

/// Orbit used for pooling points and for matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetupSpec {
    pub views: usize,
    pub resolution: usize,
    pub radius: f64,
    pub elevation_deg: f64,
    pub seed: u64,
}

/// Everything fixed before optimization starts: prompt features, the
/// point clustering and the phrase matched to each cluster.
pub struct Scene {
    pub raycaster: Raycaster,
    pub prompt: String,
    pub tokens: Vec<String>,
    pub phrases: Vec<NounPhrase>,
    pub words: Tensor,
    pub global_text: Vec<f64>,
    pub gmm: GmmModel,
    pub phrase_of_cluster: Vec<usize>,
    /// `[phrase][cluster]` similarities used for matching.
    pub similarity: Vec<Vec<f64>>,
    pub setup_poses: Vec<CameraPose>,
    pub setup_buffers: Vec<IntersectionBuffer>,
    /// Per view, one mask per cluster.
    pub object_masks: Vec<Vec<HitMap>>,
    pub pooled_points: usize,
}

impl Scene {
    pub fn prepare(mesh: Mesh, prompt: &str, provider: &dyn EmbeddingProvider, spec: &SetupSpec) -> Result<Scene> {
        let phrases = extract_noun_phrases(prompt)?;
        let k = phrases.len();
        let parts = mesh.connected_components();
        if parts > 1 && parts != k {
            return Err(Error::CountMismatch {
                phrases: k,
                clusters: parts,
            });
        }
        let words = provider.word_features(prompt)?;
        let global_text = provider.global_text(prompt)?;
        let raycaster = Raycaster::new(mesh);
        let setup_poses = orbit_poses(spec.views, spec.radius, spec.elevation_deg)?;
        let setup_buffers: Vec<_> = setup_poses
            .iter()
            .map(|p| raycaster.geometry_pass(p, spec.resolution, spec.resolution))
            .collect();
        let pooled: Vec<Vec3> = setup_buffers.iter().flat_map(|b| b.hit_points()).collect();
        if pooled.len() < k {
            return Err(Error::Degenerate(format!(
                "{} surface points visible from the setup orbit, need at least {k}",
                pooled.len()
            )));
        }
        let gmm = gmm_fit(&pooled, k, spec.seed)?;

        let mut object_masks = Vec::with_capacity(setup_buffers.len());
        let mut masked_views = vec![Vec::new(); k];
        for (pose, buf) in setup_poses.iter().zip(&setup_buffers) {
            let labels = assign_clusters(&gmm, &buf.hit_points());
            let masks = decouple_hitmap(&buf.hitmap(), buf, &labels, k)?;
            let neutral = neutral_render(buf, pose, DEFAULT_BACKGROUND)?;
            for (c, m) in masks.iter().enumerate() {
                if m.count() > 0 {
                    masked_views[c].push(mask_image(&neutral, m, DEFAULT_BACKGROUND));
                }
            }
            object_masks.push(masks);
        }
        if let Some(c) = masked_views.iter().position(Vec::is_empty) {
            return Err(Error::Degenerate(format!("cluster {c} is not visible in any setup view")));
        }
        let phrase_of_cluster = match_phrases_to_clusters(&phrases, &words, &masked_views, provider)?;
        let similarity = similarity_matrix(&phrase_embeddings(&phrases, &words)?, &masked_views, provider)?;
        Ok(Scene {
            raycaster,
            prompt: prompt.to_string(),
            tokens: tokenize(prompt),
            phrases,
            words,
            global_text,
            gmm,
            phrase_of_cluster,
            similarity,
            setup_poses,
            setup_buffers,
            object_masks,
            pooled_points: pooled.len(),
        })
    }

    pub fn num_objects(&self) -> usize {
        self.phrases.len()
    }

    pub fn mesh(&self) -> &Mesh {
        &self.raycaster.mesh
    }

    /// Cluster labels and point/word graph for the given hit points.
    pub fn graph_for(&self, points: &[Vec3]) -> Result<(ObjectAssignment, CrossModalGraph)> {
        let assignment = ObjectAssignment {
            cluster_of_point: assign_clusters(&self.gmm, points),
            phrase_of_cluster: self.phrase_of_cluster.clone(),
        };
        let graph = build_graph(&assignment, &self.phrases, self.tokens.len())?;
        Ok((assignment, graph))
    }

    /// Masked neutral renders of one setup view, one per cluster.
    pub fn masked_neutral(&self, view: usize) -> Result<Vec<Image>> {
        let neutral = neutral_render(&self.setup_buffers[view], &self.setup_poses[view], DEFAULT_BACKGROUND)?;
        Ok(self.object_masks[view]
            .iter()
            .map(|m| mask_image(&neutral, m, DEFAULT_BACKGROUND))
            .collect())
    }

    pub fn report(&self) -> ParseReport {
        let mut edges_per_cluster = vec![0usize; self.num_objects()];
        let mut points_per_cluster = vec![0usize; self.num_objects()];
        for buf in &self.setup_buffers {
            for c in assign_clusters(&self.gmm, &buf.hit_points()) {
                points_per_cluster[c] += 1;
            }
        }
        for (c, e) in edges_per_cluster.iter_mut().enumerate() {
            *e = points_per_cluster[c] * self.phrases[self.phrase_of_cluster[c]].word_count();
        }
        ParseReport {
            prompt: self.prompt.clone(),
            tokens: self.tokens.clone(),
            phrases: self
                .phrases
                .iter()
                .map(|p| PhraseReport {
                    phrase_id: p.phrase_id,
                    text: p.text(),
                    adjectives: p.adjectives.clone(),
                    head_noun: p.head_noun.clone(),
                    span: p.span,
                })
                .collect(),
            k: self.num_objects(),
            mesh_components: self.mesh().connected_components(),
            pooled_points: self.pooled_points,
            clusters: (0..self.num_objects())
                .map(|c| ClusterReport {
                    cluster: c,
                    mean: self.gmm.means[c],
                    weight: self.gmm.weights[c],
                    points: points_per_cluster[c],
                    phrase: self.phrase_of_cluster[c],
                    edges: edges_per_cluster[c],
                })
                .collect(),
            similarity: self.similarity.clone(),
            gmm_iterations: self.gmm.log_likelihood.len(),
            total_edges: edges_per_cluster.iter().sum(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PhraseReport {
    pub phrase_id: usize,
    pub text: String,
    pub adjectives: Vec<String>,
    pub head_noun: String,
    pub span: (usize, usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterReport {
    pub cluster: usize,
    pub mean: [f64; 3],
    pub weight: f64,
    pub points: usize,
    pub phrase: usize,
    pub edges: usize,
}

/// Summary of scene parsing over the setup orbit.
#[derive(Debug, Clone, Serialize)]
pub struct ParseReport {
    pub prompt: String,
    pub tokens: Vec<String>,
    pub phrases: Vec<PhraseReport>,
    pub k: usize,
    pub mesh_components: usize,
    pub pooled_points: usize,
    pub clusters: Vec<ClusterReport>,
    pub similarity: Vec<Vec<f64>>,
    pub gmm_iterations: usize,
    pub total_edges: usize,
}
