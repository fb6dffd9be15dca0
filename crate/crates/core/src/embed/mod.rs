//! Text and image embeddings standing in for a frozen vision-language
//! model, plus differentiable 2D augmentation of rendered views.

mod augment;
mod encoder;
mod file;
mod toy;

pub use augment::{augment_views, policy_rng, sample_crops, AugmentationPolicy, Crop};
pub use encoder::{downsample_mix, ImageEncoder, ENCODER_GRID};
pub use file::FileProvider;
pub use toy::{color_target, ColorSemanticsProvider, COLOR_WORDS};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::Result;
use crate::render::Image;

/// Width of every text and image feature vector.
pub const FEATURE_DIM: usize = 512;

/// Lowercased whitespace tokens; one per word of the prompt.
pub fn tokenize(prompt: &str) -> Vec<String> {
    prompt.split_whitespace().map(str::to_lowercase).collect()
}

/// Token with surrounding punctuation removed, used as a lookup key.
pub fn word_key(token: &str) -> &str {
    let t = token.trim_matches(|c: char| !c.is_alphanumeric());
    if t.is_empty() {
        token
    } else {
        t
    }
}

/// Source of text and image features.
pub trait EmbeddingProvider: Send + Sync {
    fn global_text(&self, prompt: &str) -> Result<Vec<f64>>;

    /// `[m, FEATURE_DIM]`, one row per token of [`tokenize`], in order.
    fn word_features(&self, prompt: &str) -> Result<Tensor>;

    /// `[n, FEATURE_DIM]` features of `[H*W, 3]` images, differentiable
    /// with respect to the pixels.
    fn image_features(&self, t: &mut Tape, images: &[Var], height: usize, width: usize) -> Result<Var>;

    /// `[1, FEATURE_DIM]` mean of the image feature rows.
    fn global_image(&self, t: &mut Tape, images: &[Var], height: usize, width: usize) -> Result<Var> {
        let f = self.image_features(t, images, height, width)?;
        t.mean_axis(f, 0)
    }

    fn describe(&self) -> String;

    /// Whether color words name fixed RGB targets that evaluation can
    /// measure albedo against.
    fn color_targets(&self) -> bool {
        false
    }
}

/// Image features of plain images, outside any optimization.
pub fn encode_images(provider: &dyn EmbeddingProvider, images: &[Image]) -> Result<Tensor> {
    let (h, w) = images.first().map_or((0, 0), |i| (i.height, i.width));
    let mut t = Tape::new();
    let vars: Vec<Var> = images.iter().map(|i| t.constant(i.to_tensor())).collect();
    let f = provider.image_features(&mut t, &vars, h, w)?;
    Ok(t.value(f).clone())
}
