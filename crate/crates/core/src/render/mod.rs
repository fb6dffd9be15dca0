//! Spherical-Gaussian shading of the reflection integral and image output.

mod image;
mod pipeline;
mod sg;
mod shade;

pub use image::{Image, DISPLAY_GAMMA};
pub use sg::{clamped_cosine_integral, gauss_legendre, sg_eval, SGLight, MIN_SHARPNESS};
pub use shade::{brdf_eval, shade_pixel, shade_tape, specular_lobe, ShadingInputs, VISIBILITY};
pub use pipeline::{
    default_lights, frontal_light, neutral_render, render_image, render_views, PointBatch, RenderedViews,
    DEFAULT_BACKGROUND,
};
