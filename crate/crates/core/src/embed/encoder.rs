use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::FEATURE_DIM;
use crate::autodiff::{RowMix, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Side of the box-filtered grid the encoder sees.
pub const ENCODER_GRID: usize = 8;
const INPUT_DIM: usize = ENCODER_GRID * ENCODER_GRID * 3;

/// Area-weighted box filter from an `height x width` image to the encoder
/// grid, as a row mix over pixels.
pub fn downsample_mix(height: usize, width: usize) -> RowMix {
    let g = ENCODER_GRID as f64;
    let (ch, cw) = (height as f64 / g, width as f64 / g);
    let overlaps = |cell: usize, extent: f64, n: usize| -> Vec<(usize, f64)> {
        let (lo, hi) = (cell as f64 * extent, (cell + 1) as f64 * extent);
        (lo.floor() as usize..(hi.ceil() as usize).min(n))
            .filter_map(|p| {
                let o = (hi.min(p as f64 + 1.0) - lo.max(p as f64)).max(0.0);
                (o > 0.0).then_some((p, o / extent))
            })
            .collect()
    };
    let mut rows = Vec::with_capacity(ENCODER_GRID * ENCODER_GRID);
    for i in 0..ENCODER_GRID {
        let rs = overlaps(i, ch, height);
        for j in 0..ENCODER_GRID {
            let cs = overlaps(j, cw, width);
            let mut entries = Vec::with_capacity(rs.len() * cs.len());
            for &(r, wr) in &rs {
                for &(c, wc) in &cs {
                    entries.push((r * width + c, wr * wc));
                }
            }
            rows.push(entries);
        }
    }
    RowMix {
        inputs: height * width,
        rows,
    }
}

/// Fixed random projection: box-filter to 8x8, center, flatten, project to
/// the feature width, squash with tanh.
#[derive(Debug, Clone)]
pub struct ImageEncoder {
    pub seed: u64,
    weights: Tensor,
}

impl ImageEncoder {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let normal = Normal::new(0.0, (1.0 / INPUT_DIM as f64).sqrt()).expect("valid std");
        let data = (0..INPUT_DIM * FEATURE_DIM).map(|_| normal.sample(&mut rng)).collect();
        ImageEncoder {
            seed,
            weights: Tensor::new(vec![INPUT_DIM, FEATURE_DIM], data).expect("shape"),
        }
    }

    pub fn encode(&self, t: &mut Tape, images: &[Var], height: usize, width: usize) -> Result<Var> {
        if images.is_empty() {
            return Err(Error::InvalidArgument("no images to encode".into()));
        }
        let mix = Rc::new(downsample_mix(height, width));
        let mut flat = Vec::with_capacity(images.len());
        for &img in images {
            if t.shape(img) != [height * width, 3] {
                return Err(Error::shape(
                    "image_features",
                    format!("image {:?} for {height}x{width}", t.shape(img)),
                ));
            }
            let small = t.row_mix(img, mix.clone())?;
            flat.push(t.reshape(small, vec![1, INPUT_DIM])?);
        }
        let x = t.concat(&flat, 0)?;
        let x = t.add_scalar(x, -0.5);
        let w = t.constant(self.weights.clone());
        let z = t.matmul(x, w)?;
        Ok(t.tanh(z))
    }

    /// Features of an image that is one flat color everywhere.
    pub fn encode_color(&self, rgb: [f64; 3]) -> Vec<f64> {
        let x: Vec<f64> = (0..INPUT_DIM).map(|i| rgb[i % 3] - 0.5).collect();
        (0..FEATURE_DIM)
            .map(|j| {
                let z: f64 = (0..INPUT_DIM).map(|i| x[i] * self.weights.at2(i, j)).sum();
                z.tanh()
            })
            .collect()
    }
}
