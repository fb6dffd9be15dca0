//! Prompt chunking, point clustering, per-object masks, phrase matching
//! and the point/word graph that drives decoupled attention.

mod gmm;
mod objects;
mod phrase;

pub use gmm::{assign_clusters, gmm_fit, GmmModel, COVARIANCE_FLOOR, EM_TOL, MAX_EM_ITERS};
pub use objects::{
    best_assignment, build_graph, decouple_hitmap, mask_image, match_phrases_to_clusters, phrase_embeddings,
    similarity_matrix, CrossModalGraph, ObjectAssignment,
};
pub use phrase::{extract_noun_phrases, NounPhrase};
