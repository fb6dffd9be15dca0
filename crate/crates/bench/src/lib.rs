//! Shared fixtures for the benchmarks.

use temo_core::geometry::two_spheres;
use temo_core::trainer::{Scene, SetupSpec, TrainConfig};
use temo_core::{ColorSemanticsProvider, FieldConfig};

pub const PROMPT: &str = "a red sphere and a blue sphere";

pub fn toy_scene(provider: &ColorSemanticsProvider, resolution: usize) -> Scene {
    Scene::prepare(
        two_spheres(3),
        PROMPT,
        provider,
        &SetupSpec {
            views: 8,
            resolution,
            radius: 2.5,
            elevation_deg: 20.0,
            seed: 0,
        },
    )
    .expect("toy scene parses")
}

pub fn toy_config(width: usize) -> TrainConfig {
    TrainConfig {
        field: FieldConfig {
            width,
            attn_dim: width,
            ..FieldConfig::default()
        },
        ..TrainConfig::default()
    }
}
