//! Cross-grained contrast: a sentence-level cosine loss plus a word/view
//! level loss built from the image-word correlation map.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Mixing weights of the coarse and fine terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgcWeights {
    pub lambda_c: f64,
    pub lambda_f: f64,
}

impl Default for CgcWeights {
    fn default() -> Self {
        CgcWeights {
            lambda_c: 1.0,
            lambda_f: 0.33,
        }
    }
}

impl CgcWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_c >= 0.0) || !(self.lambda_f >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "loss weights must be non-negative, got lambda_c={} lambda_f={}",
                self.lambda_c, self.lambda_f
            )));
        }
        Ok(())
    }
}

/// Row-pair cosines `S [n, m]` with row means `S_I [n, 1]` and column
/// means `S_T [1, m]`.
#[derive(Debug, Clone, Copy)]
pub struct CorrelationVars {
    pub s: Var,
    pub s_i: Var,
    pub s_t: Var,
}

/// `-cos(F_I, F_T)` for `[1, d]` inputs.
pub fn coarse_loss(t: &mut Tape, f_i: Var, f_t: Var) -> Result<Var> {
    let c = t.cosine_similarity(f_i, f_t)?;
    let c = t.sum(c);
    Ok(t.neg(c))
}

pub fn correlation_map(t: &mut Tape, images: Var, words: Var) -> Result<CorrelationVars> {
    let s = t.cosine_matrix(images, words)?;
    let s_i = t.mean_axis(s, 1)?;
    let s_t = t.mean_axis(s, 0)?;
    Ok(CorrelationVars { s, s_i, s_t })
}

fn weighted_score(t: &mut Tape, v: Var, axis: usize) -> Result<Var> {
    let w = t.softmax(v, axis)?;
    let p = t.mul(w, v)?;
    Ok(t.sum(p))
}

/// `-(L_I + L_T) / 2`, each score a softmax-weighted mean of its axis means.
pub fn fine_loss(t: &mut Tape, map: &CorrelationVars) -> Result<Var> {
    let li = weighted_score(t, map.s_i, 0)?;
    let lt = weighted_score(t, map.s_t, 1)?;
    let sum = t.add(li, lt)?;
    Ok(t.scale(sum, -0.5))
}

pub fn cgc_loss(t: &mut Tape, coarse: Var, fine: Var, w: &CgcWeights) -> Result<Var> {
    let c = t.scale(coarse, w.lambda_c);
    let f = t.scale(fine, w.lambda_f);
    t.add(c, f)
}

/// Loss terms of one evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub coarse: Var,
    pub fine: Var,
    pub total: Var,
}

/// Full objective from image features `[n, d]`, word features `[m, d]`
/// and the global text vector `[1, d]`. The coarse image vector is the
/// mean of the image rows.
pub fn cgc_objective(t: &mut Tape, image_feats: Var, words: Var, global_text: Var, w: &CgcWeights) -> Result<LossVars> {
    let gi = t.mean_axis(image_feats, 0)?;
    let coarse = coarse_loss(t, gi, global_text)?;
    let map = correlation_map(t, image_feats, words)?;
    let fine = fine_loss(t, &map)?;
    let total = cgc_loss(t, coarse, fine, w)?;
    Ok(LossVars { coarse, fine, total })
}

/// Plain-value helpers for reporting.
pub fn coarse_value(f_i: &[f64], f_t: &[f64]) -> Result<f64> {
    let mut t = Tape::new();
    let a = t.constant(Tensor::new(vec![1, f_i.len()], f_i.to_vec())?);
    let b = t.constant(Tensor::new(vec![1, f_t.len()], f_t.to_vec())?);
    let l = coarse_loss(&mut t, a, b)?;
    Ok(t.value(l).item())
}

pub fn fine_value(images: &Tensor, words: &Tensor) -> Result<f64> {
    let mut t = Tape::new();
    let a = t.constant(images.clone());
    let b = t.constant(words.clone());
    let map = correlation_map(&mut t, a, b)?;
    let l = fine_loss(&mut t, &map)?;
    Ok(t.value(l).item())
}

/// Fine loss given the correlation map directly.
pub fn fine_from_map(s: &Tensor) -> Result<f64> {
    let mut t = Tape::new();
    let sv = t.constant(s.clone());
    let s_i = t.mean_axis(sv, 1)?;
    let s_t = t.mean_axis(sv, 0)?;
    let l = fine_loss(&mut t, &CorrelationVars { s: sv, s_i, s_t })?;
    Ok(t.value(l).item())
}
