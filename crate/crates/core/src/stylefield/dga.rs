use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::sceneparse::CrossModalGraph;

/// How surface points attend to words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DgaMode {
    /// Only to the words of the phrase matched to the point's object.
    #[default]
    Graph,
    /// To every word of the prompt.
    Dense,
    /// No attention block.
    Off,
}

/// Query/key/value projections of one attention block.
#[derive(Debug, Clone, PartialEq)]
pub struct DgaParams {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct DgaVars {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
}

impl DgaParams {
    pub fn attn_dim(&self) -> usize {
        self.wq.shape()[1]
    }
}

/// Cross-attention from point features `[P, d]` to word features
/// `[M, word_dim]` restricted to graph edges, added back to the input:
/// `v + sum_j softmax_j(q_i . k_j / sqrt(d_l)) v_j`.
///
/// Returns the updated features and the attention weights `[P, M]`.
pub fn dga_attend(t: &mut Tape, feats: Var, words: Var, vars: &DgaVars, mask: Rc<Vec<bool>>) -> Result<(Var, Var)> {
    let (p, _) = t.value(feats).dims2()?;
    let (m, _) = t.value(words).dims2()?;
    if mask.len() != p * m {
        return Err(Error::shape("dga_attend", format!("mask for {p}x{m} has {} entries", mask.len())));
    }
    if let Some(i) = (0..p).find(|&i| !mask[i * m..(i + 1) * m].iter().any(|&b| b)) {
        return Err(Error::InvalidArgument(format!("point {i} has no word neighbors")));
    }
    let dl = t.shape(vars.wq)[1] as f64;
    let k = t.matmul(words, vars.wk)?;
    let k = t.add(k, vars.bk)?;
    let v = t.matmul(words, vars.wv)?;
    let v = t.add(v, vars.bv)?;
    // (h Wq + bq) K^T evaluated as h (Wq K^T) + bq K^T
    let wqk = t.matmul_nt(vars.wq, k)?;
    let bqk = t.matmul_nt(vars.bq, k)?;
    let logits = t.matmul(feats, wqk)?;
    let logits = t.add(logits, bqk)?;
    let logits = t.scale(logits, 1.0 / dl.sqrt());
    let alpha = t.masked_softmax(logits, mask)?;
    let attended = t.matmul(alpha, v)?;
    Ok((t.add(feats, attended)?, alpha))
}

pub(crate) fn graph_mask(graph: &CrossModalGraph, mode: DgaMode) -> Rc<Vec<bool>> {
    match mode {
        DgaMode::Graph => Rc::new(graph.mask()),
        _ => Rc::new(vec![true; graph.num_points * graph.num_words]),
    }
}
