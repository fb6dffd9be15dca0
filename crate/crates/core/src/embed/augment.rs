use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{RowMix, Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPolicy {
    pub crops_per_view: usize,
    pub scale_min: f64,
    pub scale_max: f64,
    pub seed: u64,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        AugmentationPolicy {
            crops_per_view: 2,
            scale_min: 0.6,
            scale_max: 1.0,
            seed: 0,
        }
    }
}

/// Square-aspect crop window in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crop {
    pub top: f64,
    pub left: f64,
    pub scale: f64,
}

impl Crop {
    pub const FULL: Crop = Crop {
        top: 0.0,
        left: 0.0,
        scale: 1.0,
    };

    /// Bilinear crop-and-resize back to `height x width` as a row mix.
    pub fn mix(&self, height: usize, width: usize) -> RowMix {
        let axis = |out: usize, n: usize, origin: f64| -> (usize, usize, f64) {
            let x = origin + (out as f64 + 0.5) * self.scale - 0.5;
            let x = x.clamp(0.0, (n - 1) as f64);
            let i0 = x.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, x - i0 as f64)
        };
        let mut rows = Vec::with_capacity(height * width);
        for r in 0..height {
            let (r0, r1, fr) = axis(r, height, self.top);
            for c in 0..width {
                let (c0, c1, fc) = axis(c, width, self.left);
                let mut e = Vec::with_capacity(4);
                for (rr, wr) in [(r0, 1.0 - fr), (r1, fr)] {
                    for (cc, wc) in [(c0, 1.0 - fc), (c1, fc)] {
                        if wr * wc != 0.0 {
                            e.push((rr * width + cc, wr * wc));
                        }
                    }
                }
                rows.push(e);
            }
        }
        RowMix {
            inputs: height * width,
            rows,
        }
    }
}

/// Draws `crops_per_view` random crops for each of `views` images.
pub fn sample_crops(policy: &AugmentationPolicy, views: usize, height: usize, width: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Crop>> {
    if policy.crops_per_view == 0 {
        return Err(Error::InvalidArgument("crops_per_view must be at least 1".into()));
    }
    if !(0.0 < policy.scale_min && policy.scale_min <= policy.scale_max && policy.scale_max <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "crop scale range [{}, {}] must lie in (0, 1]",
            policy.scale_min, policy.scale_max
        )));
    }
    let mut crops = Vec::with_capacity(views * policy.crops_per_view);
    for _ in 0..views * policy.crops_per_view {
        let scale = if policy.scale_min == policy.scale_max {
            policy.scale_min
        } else {
            rng.gen_range(policy.scale_min..=policy.scale_max)
        };
        let span = |n: usize| (n as f64 * (1.0 - scale)).max(0.0);
        let (sh, sw) = (span(height), span(width));
        let top = if sh > 0.0 { rng.gen_range(0.0..=sh) } else { 0.0 };
        let left = if sw > 0.0 { rng.gen_range(0.0..=sw) } else { 0.0 };
        crops.push(Crop { top, left, scale });
    }
    Ok(crops)
}

/// Random crop-and-resize of every view; output `k` comes from view
/// `k / crops_per_view`.
pub fn augment_views(
    t: &mut Tape,
    images: &[Var],
    height: usize,
    width: usize,
    policy: &AugmentationPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Var>> {
    let crops = sample_crops(policy, images.len(), height, width, rng)?;
    crops
        .iter()
        .enumerate()
        .map(|(k, crop)| t.row_mix(images[k / policy.crops_per_view], Rc::new(crop.mix(height, width))))
        .collect()
}

/// Generator for a policy's own seed, mixed with a step counter.
pub fn policy_rng(policy: &AugmentationPolicy, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    rng.set_stream(step);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn img(t: &mut Tape, h: usize, w: usize, k: f64) -> Var {
        t.constant(Tensor::new(vec![h * w, 3], (0..h * w * 3).map(|i| (i as f64 * k).sin()).collect()).unwrap())
    }

    #[test]
    fn unit_scale_single_crop_is_identity() {
        let mut t = Tape::new();
        let x = img(&mut t, 7, 5, 0.3);
        let policy = AugmentationPolicy {
            crops_per_view: 1,
            scale_min: 1.0,
            scale_max: 1.0,
            seed: 0,
        };
        let out = augment_views(&mut t, &[x], 7, 5, &policy, &mut policy_rng(&policy, 0)).unwrap();
        assert_eq!(t.value(out[0]), t.value(x));
    }

    #[test]
    fn counts_and_determinism() {
        let policy = AugmentationPolicy::default();
        let run = || {
            let mut t = Tape::new();
            let xs: Vec<Var> = (0..5).map(|k| img(&mut t, 8, 8, 0.1 + k as f64)).collect();
            let out = augment_views(&mut t, &xs, 8, 8, &policy, &mut policy_rng(&policy, 3)).unwrap();
            assert_eq!(out.len(), 10);
            out.iter().map(|&v| t.value(v).clone()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn crop_weights_are_convex() {
        let c = Crop {
            top: 1.3,
            left: 0.4,
            scale: 0.7,
        };
        for r in c.mix(6, 9).rows {
            assert!((r.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(r.iter().all(|e| e.1 > 0.0));
        }
    }
}
