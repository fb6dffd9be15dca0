use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dga::{dga_attend, graph_mask, DgaMode, DgaVars};
use super::fourier::fourier_encode;
use crate::autodiff::{Tape, Tensor, Var};
use crate::embed::FEATURE_DIM;
use crate::error::{Error, Result};
use crate::sceneparse::CrossModalGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub width: usize,
    pub fourier_bands: usize,
    pub word_dim: usize,
    pub attn_dim: usize,
    pub dga: DgaMode,
    /// One attention block for both branches instead of one each.
    pub share_dga: bool,
    pub normal_scale: f64,
    pub roughness_min: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            width: 256,
            fourier_bands: 6,
            word_dim: FEATURE_DIM,
            attn_dim: 256,
            dga: DgaMode::Graph,
            share_dga: false,
            normal_scale: 0.3,
            roughness_min: 0.05,
        }
    }
}

impl FieldConfig {
    /// `(name, shape, init_bound)`; a bound of 0 means zero init.
    fn layout(&self) -> Vec<(String, Vec<usize>, f64)> {
        // position plus normal (or view direction), each band giving sin and cos
        let enc = 6 * 2 * self.fourier_bands;
        let w = self.width;
        let mut out = Vec::new();
        let mut linear = |name: &str, i: usize, o: usize, zero: bool| {
            let b = if zero { 0.0 } else { 1.0 / (i as f64).sqrt() };
            out.push((format!("{name}.w"), vec![i, o], b));
            out.push((format!("{name}.b"), vec![1, o], b));
        };
        linear("normal.l1", enc, w, false);
        linear("normal.l2", w, w, false);
        linear("normal.l3", w, 3, true);
        linear("refl.l1", enc, w, false);
        linear("refl.l2", w, w, false);
        linear("refl.diffuse", w, 3, false);
        linear("refl.roughness", w, 1, false);
        linear("refl.specular", w, 3, false);
        if self.dga != DgaMode::Off {
            let blocks: &[&str] = if self.share_dga { &["dga"] } else { &["normal.dga", "refl.dga"] };
            for blk in blocks {
                linear(&format!("{blk}.q"), w, self.attn_dim, false);
                linear(&format!("{blk}.k"), self.word_dim, self.attn_dim, false);
                linear(&format!("{blk}.v"), self.word_dim, w, false);
            }
        }
        out
    }
}

/// Named parameters of both branches.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleField {
    pub config: FieldConfig,
    names: Vec<String>,
    values: Vec<Tensor>,
}

/// Tape handles for every parameter, in the field's parameter order.
#[derive(Debug, Clone)]
pub struct FieldVars {
    pub vars: Vec<Var>,
}

pub struct FieldInputs<'a> {
    /// `[P, 3]` surface points.
    pub points: &'a Tensor,
    /// `[P, 3]` unit face normals.
    pub normals: &'a Tensor,
    /// `[P, 3]` unit ray directions.
    pub view_dirs: &'a Tensor,
    /// `[M, word_dim]` prompt word features.
    pub words: Var,
    pub graph: &'a CrossModalGraph,
}

#[derive(Debug, Clone)]
pub struct FieldOutputs {
    pub delta_n: Var,
    /// Displaced, renormalized normal.
    pub normal: Var,
    pub diffuse: Var,
    pub roughness: Var,
    pub specular: Var,
    /// Attention weights of the normal and reflectance blocks.
    pub attention: Vec<Var>,
}

impl StyleField {
    pub fn new(config: FieldConfig, seed: u64) -> Result<Self> {
        if config.width == 0 || config.fourier_bands == 0 || config.attn_dim == 0 || config.word_dim == 0 {
            return Err(Error::InvalidArgument("field dimensions must be positive".into()));
        }
        if !(config.roughness_min > 0.0 && config.roughness_min < 1.0) || !(config.normal_scale >= 0.0) {
            return Err(Error::InvalidArgument("roughness_min must be in (0,1), normal_scale >= 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut names, mut values) = (Vec::new(), Vec::new());
        for (name, shape, bound) in config.layout() {
            let n = shape.iter().product();
            let data = if bound == 0.0 {
                vec![0.0; n]
            } else {
                (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
            };
            names.push(name);
            values.push(Tensor::new(shape, data)?);
        }
        Ok(StyleField { config, names, values })
    }

    /// Rebuilds a field from named tensors, checking them against the
    /// layout implied by `config`.
    pub fn from_named(config: FieldConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        let layout = config.layout();
        if layout.len() != named.len() {
            return Err(Error::shape("StyleField", format!("{} tensors for {} parameters", named.len(), layout.len())));
        }
        let mut map: std::collections::HashMap<String, Tensor> = named.into_iter().collect();
        let mut names = Vec::new();
        let mut values = Vec::new();
        for (name, shape, _) in layout {
            let t = map.remove(&name).ok_or_else(|| Error::MissingKey(name.clone()))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::shape("StyleField", format!("{name}: {:?} vs {:?}", t.shape(), shape)));
            }
            if !t.is_finite() {
                return Err(Error::NonFinite { what: name });
            }
            names.push(name);
            values.push(t);
        }
        Ok(StyleField { config, names, values })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.values[i])
    }

    pub fn num_parameters(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    /// Registers parameters as differentiable leaves.
    pub fn bind(&self, t: &mut Tape) -> FieldVars {
        FieldVars {
            vars: self.values.iter().map(|v| t.param(v.clone())).collect(),
        }
    }

    /// Registers parameters as constants (evaluation only).
    pub fn bind_constant(&self, t: &mut Tape) -> FieldVars {
        FieldVars {
            vars: self.values.iter().map(|v| t.constant(v.clone())).collect(),
        }
    }

    fn var(&self, vars: &FieldVars, name: &str) -> Var {
        let i = self.names.iter().position(|n| n == name).unwrap_or_else(|| panic!("no parameter {name}"));
        vars.vars[i]
    }

    fn linear(&self, t: &mut Tape, vars: &FieldVars, name: &str, x: Var) -> Result<Var> {
        let y = t.matmul(x, self.var(vars, &format!("{name}.w")))?;
        t.add(y, self.var(vars, &format!("{name}.b")))
    }

    fn dga_vars(&self, vars: &FieldVars, branch: &str) -> DgaVars {
        let blk = if self.config.share_dga { "dga".to_string() } else { format!("{branch}.dga") };
        let v = |s: &str| self.var(vars, &format!("{blk}.{s}"));
        DgaVars {
            wq: v("q.w"),
            bq: v("q.b"),
            wk: v("k.w"),
            bk: v("k.b"),
            wv: v("v.w"),
            bv: v("v.b"),
        }
    }

    /// Evaluates both branches for a batch of surface points.
    pub fn forward(&self, t: &mut Tape, vars: &FieldVars, inp: &FieldInputs) -> Result<FieldOutputs> {
        let (p, _) = inp.points.dims2()?;
        for (name, x) in [("normals", inp.normals), ("view_dirs", inp.view_dirs)] {
            if x.shape() != [p, 3] {
                return Err(Error::shape("StyleField::forward", format!("{name} {:?} for {p} points", x.shape())));
            }
        }
        if inp.graph.num_points != p || t.shape(inp.words)[0] != inp.graph.num_words {
            return Err(Error::shape(
                "StyleField::forward",
                format!(
                    "graph {}x{} for {p} points and {} words",
                    inp.graph.num_points,
                    inp.graph.num_words,
                    t.shape(inp.words)[0]
                ),
            ));
        }
        let bands = self.config.fourier_bands;
        let cat = |a: &Tensor, b: &Tensor| -> Result<Tensor> {
            let data: Vec<f64> = (0..p).flat_map(|i| [a.row(i), b.row(i)].concat()).collect();
            fourier_encode(&Tensor::new(vec![p, 6], data)?, bands)
        };
        let enc_n = t.constant(cat(inp.points, inp.normals)?);
        let enc_r = t.constant(cat(inp.points, inp.view_dirs)?);
        let mask = (self.config.dga != DgaMode::Off).then(|| graph_mask(inp.graph, self.config.dga));
        let mut attention = Vec::new();

        let h = self.linear(t, vars, "normal.l1", enc_n)?;
        let h = t.relu(h);
        let h = self.linear(t, vars, "normal.l2", h)?;
        let mut h = t.relu(h);
        if let Some(m) = &mask {
            let (out, a) = dga_attend(t, h, inp.words, &self.dga_vars(vars, "normal"), m.clone())?;
            h = out;
            attention.push(a);
        }
        let d = self.linear(t, vars, "normal.l3", h)?;
        let d = t.tanh(d);
        let delta_n = t.scale(d, self.config.normal_scale);
        let base = t.constant(inp.normals.clone());
        let displaced = t.add(base, delta_n)?;
        let normal = t.normalize_rows(displaced)?;

        let h = self.linear(t, vars, "refl.l1", enc_r)?;
        let h = t.relu(h);
        let h = self.linear(t, vars, "refl.l2", h)?;
        let mut h = t.relu(h);
        if let Some(m) = &mask {
            let (out, a) = dga_attend(t, h, inp.words, &self.dga_vars(vars, "refl"), m.clone())?;
            h = out;
            attention.push(a);
        }
        let d = self.linear(t, vars, "refl.diffuse", h)?;
        let diffuse = t.sigmoid(d);
        let r = self.linear(t, vars, "refl.roughness", h)?;
        let r = t.sigmoid(r);
        let r = t.scale(r, 1.0 - self.config.roughness_min);
        let roughness = t.add_scalar(r, self.config.roughness_min);
        let s = self.linear(t, vars, "refl.specular", h)?;
        let specular = t.sigmoid(s);
        Ok(FieldOutputs {
            delta_n,
            normal,
            diffuse,
            roughness,
            specular,
            attention,
        })
    }
}
