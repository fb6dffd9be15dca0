use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encoder::ImageEncoder;
use super::{tokenize, EmbeddingProvider, FEATURE_DIM};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    file: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    encoder_seed: u64,
    arrays: BTreeMap<String, ArrayEntry>,
}

/// Serves text features stored on disk; images still go through the
/// in-process encoder so the optimization stays differentiable.
///
/// The manifest is JSON naming each array's little-endian `f32` blob and
/// its shape; `global_text` is `[512]` and `word_features` is `[m, 512]`.
#[derive(Debug, Clone)]
pub struct FileProvider {
    global_text: Vec<f64>,
    word_features: Tensor,
    encoder: ImageEncoder,
}

impl FileProvider {
    pub fn new(global_text: Vec<f64>, word_features: Tensor, encoder_seed: u64) -> Result<Self> {
        if global_text.len() != FEATURE_DIM {
            return Err(Error::shape("FileProvider", format!("global_text has {} entries", global_text.len())));
        }
        match word_features.shape() {
            [_, d] if *d == FEATURE_DIM => {}
            s => return Err(Error::shape("FileProvider", format!("word_features shape {s:?}"))),
        }
        Ok(FileProvider {
            global_text,
            word_features,
            encoder: ImageEncoder::new(encoder_seed),
        })
    }

    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let path = manifest_path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::InvalidArgument(format!("unsupported manifest version {}", m.version)));
        }
        let dir = path.parent().unwrap_or(Path::new("."));
        let read = |key: &str| -> Result<(Vec<usize>, Vec<f64>)> {
            let entry = m.arrays.get(key).ok_or_else(|| Error::MissingKey(key.to_string()))?;
            let blob_path = dir.join(&entry.file);
            let bytes = std::fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
            let n: usize = entry.shape.iter().product();
            if bytes.len() != n * 4 {
                return Err(Error::shape(
                    "FileProvider::load",
                    format!("{key}: {} bytes for shape {:?}", bytes.len(), entry.shape),
                ));
            }
            let data = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
                .collect();
            Ok((entry.shape.clone(), data))
        };
        let (gshape, global) = read("global_text")?;
        if gshape != [FEATURE_DIM] {
            return Err(Error::shape("FileProvider::load", format!("global_text shape {gshape:?}")));
        }
        let (wshape, words) = read("word_features")?;
        FileProvider::new(global, Tensor::new(wshape, words)?, m.encoder_seed)
    }

    /// Writes a manifest plus `f32` blobs next to it.
    pub fn save(&self, manifest_path: impl AsRef<Path>) -> Result<()> {
        let path = manifest_path.as_ref();
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut arrays = BTreeMap::new();
        for (key, shape, data) in [
            ("global_text", vec![FEATURE_DIM], self.global_text.as_slice()),
            ("word_features", self.word_features.shape().to_vec(), self.word_features.data()),
        ] {
            let file = format!("{key}.f32");
            let bytes: Vec<u8> = data.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect();
            let blob = dir.join(&file);
            std::fs::write(&blob, bytes).map_err(|e| Error::io(&blob, e))?;
            arrays.insert(key.to_string(), ArrayEntry { file, shape });
        }
        let m = Manifest {
            version: MANIFEST_VERSION,
            encoder_seed: self.encoder.seed,
            arrays,
        };
        std::fs::write(path, serde_json::to_string_pretty(&m)?).map_err(|e| Error::io(path, e))
    }

    pub fn stored_word_features(&self) -> &Tensor {
        &self.word_features
    }
}

impl EmbeddingProvider for FileProvider {
    fn global_text(&self, _prompt: &str) -> Result<Vec<f64>> {
        Ok(self.global_text.clone())
    }

    fn word_features(&self, prompt: &str) -> Result<Tensor> {
        let m = tokenize(prompt).len();
        if m != self.word_features.shape()[0] {
            return Err(Error::shape(
                "word_features",
                format!("prompt has {m} words, file stores {}", self.word_features.shape()[0]),
            ));
        }
        Ok(self.word_features.clone())
    }

    fn image_features(&self, t: &mut Tape, images: &[Var], height: usize, width: usize) -> Result<Var> {
        self.encoder.encode(t, images, height, width)
    }

    fn describe(&self) -> String {
        format!("file provider ({} stored words, encoder seed {})", self.word_features.shape()[0], self.encoder.seed)
    }
}
