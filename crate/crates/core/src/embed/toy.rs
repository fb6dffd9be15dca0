use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::encoder::ImageEncoder;
use super::{tokenize, word_key, EmbeddingProvider, FEATURE_DIM};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Color adjectives the toy provider grounds in the image encoder.
pub const COLOR_WORDS: &[(&str, [f64; 3])] = &[
    ("red", [1.0, 0.0, 0.0]),
    ("green", [0.0, 1.0, 0.0]),
    ("blue", [0.0, 0.0, 1.0]),
    ("yellow", [1.0, 1.0, 0.0]),
    ("cyan", [0.0, 1.0, 1.0]),
    ("magenta", [1.0, 0.0, 1.0]),
    ("orange", [1.0, 0.5, 0.0]),
    ("purple", [0.5, 0.0, 0.5]),
    ("pink", [1.0, 0.6, 0.8]),
    ("brown", [0.55, 0.27, 0.07]),
    ("white", [1.0, 1.0, 1.0]),
    ("black", [0.0, 0.0, 0.0]),
];

pub fn color_target(word: &str) -> Option<[f64; 3]> {
    let key = word_key(word).to_lowercase();
    COLOR_WORDS.iter().find(|(w, _)| *w == key).map(|(_, c)| *c)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

/// Desk-scale provider: color words embed as the encoder's response to a
/// flat patch of that color; every other word is a seeded random unit
/// vector.
#[derive(Debug, Clone)]
pub struct ColorSemanticsProvider {
    pub seed: u64,
    encoder: ImageEncoder,
}

impl ColorSemanticsProvider {
    pub fn new(seed: u64) -> Self {
        ColorSemanticsProvider {
            seed,
            encoder: ImageEncoder::new(seed),
        }
    }

    pub fn encoder(&self) -> &ImageEncoder {
        &self.encoder
    }

    pub fn word_vector(&self, token: &str) -> Vec<f64> {
        if let Some(rgb) = color_target(token) {
            return self.encoder.encode_color(rgb);
        }
        let key = word_key(token).to_lowercase();
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(key.as_bytes()) ^ self.seed.rotate_left(17));
        let v: Vec<f64> = (0..FEATURE_DIM).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }
}

impl EmbeddingProvider for ColorSemanticsProvider {
    fn global_text(&self, prompt: &str) -> Result<Vec<f64>> {
        let w = self.word_features(prompt)?;
        let m = w.shape()[0] as f64;
        Ok((0..FEATURE_DIM)
            .map(|j| (0..w.shape()[0]).map(|i| w.at2(i, j)).sum::<f64>() / m)
            .collect())
    }

    fn word_features(&self, prompt: &str) -> Result<Tensor> {
        let toks = tokenize(prompt);
        if toks.is_empty() {
            return Err(Error::InvalidArgument("empty prompt".into()));
        }
        Tensor::from_rows(&toks.iter().map(|t| self.word_vector(t)).collect::<Vec<_>>())
    }

    fn image_features(&self, t: &mut Tape, images: &[Var], height: usize, width: usize) -> Result<Var> {
        self.encoder.encode(t, images, height, width)
    }

    fn describe(&self) -> String {
        format!("color-semantics toy provider (seed {})", self.seed)
    }

    fn color_targets(&self) -> bool {
        true
    }
}
