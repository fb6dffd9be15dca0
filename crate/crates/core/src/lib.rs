//! Text-driven stylization of multi-object meshes: prompt and scene
//! parsing, a graph-attention style field, spherical-Gaussian shading and
//! cross-grained contrastive supervision.

pub mod autodiff;
pub mod embed;
pub mod error;
pub mod geometry;
pub mod render;
pub mod sceneparse;
pub mod stylefield;
pub mod supervision;
pub mod trainer;

pub use autodiff::{Tape, Tensor, Var};
pub use embed::{ColorSemanticsProvider, EmbeddingProvider, FileProvider};
pub use error::{Error, Result};
pub use geometry::{load_mesh, CameraPose, Mesh, Vec3};
pub use render::{Image, SGLight};
pub use sceneparse::{CrossModalGraph, GmmModel, NounPhrase, ObjectAssignment};
pub use stylefield::{FieldConfig, StyleField};
pub use supervision::CgcWeights;
pub use trainer::{EvalReport, Lighting, Scene, TrainConfig, TrainState};
