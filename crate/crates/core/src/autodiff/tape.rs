use std::rc::Rc;

use super::broadcast::{broadcast_shape, Broadcast};
use super::matmul::gemm;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Smallest magnitude accepted as a divisor.
pub const DIV_EPS: f64 = 1e-12;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Row-sparse linear operator used by [`Tape::row_mix`].
#[derive(Debug, Clone, PartialEq)]
pub struct RowMix {
    /// Number of rows the input must have.
    pub inputs: usize,
    /// For each output row, `(input_row, weight)` pairs.
    pub rows: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul { a: Var, b: Var, trans_b: bool },
    Transpose(Var),
    Sum(Var),
    SumAxis { x: Var, axis: usize },
    Mean(Var),
    MeanAxis { x: Var, axis: usize },
    Exp(Var),
    Log(Var),
    Sin(Var),
    Cos(Var),
    Sqrt(Var),
    Tanh(Var),
    Sigmoid(Var),
    ClampMin { x: Var, min: f64 },
    Maximum(Var, Var),
    Softmax { x: Var, axis: usize },
    MaskedSoftmax { x: Var },
    Concat { inputs: Vec<Var>, axis: usize },
    GatherRows { x: Var, idx: Rc<Vec<usize>> },
    SliceCols { x: Var, start: usize },
    RowMix { x: Var, mix: Rc<RowMix> },
    Reshape(Var),
    L2Norm { x: Var, axis: usize },
    /// Elementwise map with local partial derivatives recorded at forward time.
    Map1 { x: Var, dx: Vec<f64> },
    Map2 { a: Var, b: Var, da: Vec<f64>, db: Vec<f64> },
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Maximum(a, b) => vec![*a, *b],
            MatMul { a, b, .. } | Map2 { a, b, .. } => vec![*a, *b],
            Neg(x) | Scale(x, _) | AddScalar(x) | Transpose(x) | Sum(x) | Mean(x) | Exp(x)
            | Log(x) | Sin(x) | Cos(x) | Sqrt(x) | Tanh(x) | Sigmoid(x) | Reshape(x) => vec![*x],
            SumAxis { x, .. }
            | MeanAxis { x, .. }
            | ClampMin { x, .. }
            | Softmax { x, .. }
            | MaskedSoftmax { x, .. }
            | GatherRows { x, .. }
            | SliceCols { x, .. }
            | RowMix { x, .. }
            | L2Norm { x, .. }
            | Map1 { x, .. } => vec![*x],
            Concat { inputs, .. } => inputs.clone(),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a computation as it executes so it can be differentiated in reverse.
///
/// Nodes are appended in evaluation order, which is already a topological
/// order; `backward` simply walks the record from the end.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = op
            .parents()
            .iter()
            .any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` root with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    // ---- elementwise binary with broadcasting ----

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let out_shape = broadcast_shape(&sa, &sb).ok_or_else(|| {
            Error::shape(name, format!("cannot broadcast {sa:?} with {sb:?}"))
        })?;
        let va = self.value(a).data();
        let vb = self.value(b).data();
        let n: usize = out_shape.iter().product();
        let mut out = Vec::with_capacity(n);
        if sa == sb {
            out.extend(va.iter().zip(vb).map(|(&x, &y)| f(x, y)));
        } else {
            let bc = Broadcast::new(&out_shape, &sa, &sb);
            bc.for_each(|_, ia, ib| out.push(f(va[ia], vb[ib])));
        }
        let t = Tensor::new(out_shape, out)?;
        Ok(self.push(t, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if let Some(&v) = self.value(b).data().iter().find(|v| v.abs() < DIV_EPS) {
            return Err(Error::DivisionByZero { op: "div", value: v });
        }
        self.binary(a, b, "div", |x, y| x / y, Op::Div(a, b))
    }

    /// Elementwise maximum; the gradient goes to `a` on ties.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "maximum", f64::max, Op::Maximum(a, b))
    }

    // ---- elementwise unary ----

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        self.push(t, op)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(x, |v| -v, Op::Neg(x))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        self.unary(x, |v| v * k, Op::Scale(x, k))
    }

    pub fn add_scalar(&mut self, x: Var, k: f64) -> Var {
        self.unary(x, |v| v + k, Op::AddScalar(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(&v) = self.value(x).data().iter().find(|v| **v <= 0.0) {
            return Err(Error::InvalidArgument(format!("log of non-positive value {v}")));
        }
        Ok(self.unary(x, f64::ln, Op::Log(x)))
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary(x, f64::sin, Op::Sin(x))
    }

    pub fn cos(&mut self, x: Var) -> Var {
        self.unary(x, f64::cos, Op::Cos(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        if let Some(&v) = self.value(x).data().iter().find(|v| **v < 0.0) {
            return Err(Error::InvalidArgument(format!("sqrt of negative value {v}")));
        }
        Ok(self.unary(x, f64::sqrt, Op::Sqrt(x)))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    /// `max(x, min)`; subgradient 0 at the boundary.
    pub fn clamp_min(&mut self, x: Var, min: f64) -> Var {
        self.unary(x, |v| v.max(min), Op::ClampMin { x, min })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.clamp_min(x, 0.0)
    }

    /// Elementwise map `x -> f(x)` where `f` returns `(value, derivative)`.
    pub fn map1(&mut self, x: Var, f: impl Fn(f64) -> (f64, f64)) -> Var {
        let src = self.value(x);
        let mut vals = Vec::with_capacity(src.numel());
        let mut dx = Vec::with_capacity(src.numel());
        for &v in src.data() {
            let (y, d) = f(v);
            vals.push(y);
            dx.push(d);
        }
        let t = Tensor::new(src.shape().to_vec(), vals).expect("same shape");
        self.push(t, Op::Map1 { x, dx })
    }

    /// Elementwise map of two same-shaped tensors, `f` returning
    /// `(value, d/da, d/db)`.
    pub fn map2(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> (f64, f64, f64)) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                "map2",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let va = self.value(a).data();
        let vb = self.value(b).data();
        let n = va.len();
        let (mut vals, mut da, mut db) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let (y, ga, gb) = f(va[i], vb[i]);
            vals.push(y);
            da.push(ga);
            db.push(gb);
        }
        let t = Tensor::new(self.shape(a).to_vec(), vals)?;
        Ok(self.push(t, Op::Map2 { a, b, da, db }))
    }

    // ---- linear algebra ----

    /// `a @ b` for rank-2 inputs.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a @ b^T` for rank-2 inputs.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (br, bc) = self.value(b).dims2()?;
        let (kb, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != kb {
            return Err(Error::shape(
                "matmul",
                format!("[{m},{k}] x [{br},{bc}] (trans_b={trans_b})"),
            ));
        }
        let mut out = vec![0.0; m * n];
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let (rsb, csb) = if trans_b { (1, bc as isize) } else { (bc as isize, 1) };
        gemm(m, k, n, av, k as isize, 1, bv, rsb, csb, &mut out, 0.0);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::MatMul { a, b, trans_b }))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.value(x).dims2()?;
        let v = self.value(x).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = v[i * c + j];
            }
        }
        let t = Tensor::new(vec![c, r], out)?;
        Ok(self.push(t, Op::Transpose(x)))
    }

    // ---- reductions ----

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x).data();
        let s: f64 = v.iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x))
    }

    /// Sum along `axis`, keeping it with size 1.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = reduce_axis(self.value(x), axis, "sum_axis")?;
        Ok(self.push(t, Op::SumAxis { x, axis }))
    }

    /// Mean along `axis`, keeping it with size 1.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let n = self.shape(x).get(axis).copied().unwrap_or(1) as f64;
        let mut t = reduce_axis(self.value(x), axis, "mean_axis")?;
        t.data_mut().iter_mut().for_each(|v| *v /= n);
        Ok(self.push(t, Op::MeanAxis { x, axis }))
    }

    /// Euclidean norm along `axis`, keeping it with size 1.
    pub fn l2_norm(&mut self, x: Var, axis: usize) -> Result<Var> {
        let src = self.value(x);
        let (outer, len, inner) = axis_split(src.shape(), axis, "l2_norm")?;
        let mut shape = src.shape().to_vec();
        shape[axis] = 1;
        let v = src.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut s = 0.0;
                for k in 0..len {
                    let e = v[(o * len + k) * inner + i];
                    s += e * e;
                }
                out[o * inner + i] = s.sqrt();
            }
        }
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::L2Norm { x, axis }))
    }

    // ---- structure ----

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let src = self.value(x);
        let (outer, len, inner) = axis_split(src.shape(), axis, "softmax")?;
        let v = src.data();
        let mut out = vec![0.0; v.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                let m = (0..len).map(|k| v[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for k in 0..len {
                    let e = (v[at(k)] - m).exp();
                    out[at(k)] = e;
                    z += e;
                }
                for k in 0..len {
                    out[at(k)] /= z;
                }
            }
        }
        let t = Tensor::new(src.shape().to_vec(), out)?;
        Ok(self.push(t, Op::Softmax { x, axis }))
    }

    /// Row-wise softmax of a rank-2 tensor restricted to entries where `mask`
    /// is true. Masked-out entries are exactly zero and receive no gradient.
    /// Every row must have at least one unmasked entry.
    pub fn masked_softmax(&mut self, x: Var, mask: Rc<Vec<bool>>) -> Result<Var> {
        let (r, c) = self.value(x).dims2()?;
        if mask.len() != r * c {
            return Err(Error::shape("masked_softmax", format!("mask len {} for [{r},{c}]", mask.len())));
        }
        let v = self.value(x).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &v[i * c..(i + 1) * c];
            let mrow = &mask[i * c..(i + 1) * c];
            let mut m = f64::NEG_INFINITY;
            for (val, &on) in row.iter().zip(mrow) {
                if on {
                    m = m.max(*val);
                }
            }
            if m == f64::NEG_INFINITY {
                return Err(Error::InvalidArgument(format!("row {i} has no unmasked entry")));
            }
            let mut z = 0.0;
            for j in 0..c {
                if mrow[j] {
                    let e = (row[j] - m).exp();
                    out[i * c + j] = e;
                    z += e;
                }
            }
            for j in 0..c {
                out[i * c + j] /= z;
            }
        }
        let t = Tensor::new(vec![r, c], out)?;
        Ok(self.push(t, Op::MaskedSoftmax { x }))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", format!("axis {axis} for rank {}", base.len())));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", format!("{base:?} vs {s:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let len = self.shape(v)[axis];
                let d = self.value(v).data();
                out.extend_from_slice(&d[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::Concat { inputs: inputs.to_vec(), axis }))
    }

    /// Selects rows (first-axis slices) by index; indices may repeat.
    pub fn gather_rows(&mut self, x: Var, idx: Rc<Vec<usize>>) -> Result<Var> {
        let src = self.value(x);
        let rows = *src.shape().first().ok_or_else(|| Error::shape("gather_rows", "scalar input"))?;
        let width: usize = src.shape()[1..].iter().product();
        let mut out = Vec::with_capacity(idx.len() * width);
        for &i in idx.iter() {
            if i >= rows {
                return Err(Error::shape("gather_rows", format!("index {i} >= {rows}")));
            }
            out.extend_from_slice(&src.data()[i * width..(i + 1) * width]);
        }
        let mut shape = src.shape().to_vec();
        shape[0] = idx.len();
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::GatherRows { x, idx }))
    }

    /// Columns `start..start + len` of a rank-2 tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.value(x).dims2()?;
        if start + len > c {
            return Err(Error::shape("slice_cols", format!("{start}..{} of {c} columns", start + len)));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&src[i * c + start..i * c + start + len]);
        }
        let t = Tensor::new(vec![r, len], out)?;
        Ok(self.push(t, Op::SliceCols { x, start }))
    }

    /// Sparse linear map over rows: output row `r` is
    /// `sum_k weight_k * x[index_k]` over the entries of `mix.rows[r]`.
    pub fn row_mix(&mut self, x: Var, mix: Rc<RowMix>) -> Result<Var> {
        let src = self.value(x);
        let rows = *src.shape().first().ok_or_else(|| Error::shape("row_mix", "scalar input"))?;
        if mix.inputs != rows {
            return Err(Error::shape("row_mix", format!("mix expects {} rows, got {rows}", mix.inputs)));
        }
        let width: usize = src.shape()[1..].iter().product();
        let mut out = vec![0.0; mix.rows.len() * width];
        for (r, entries) in mix.rows.iter().enumerate() {
            let dst = &mut out[r * width..(r + 1) * width];
            for &(i, w) in entries {
                for (d, v) in dst.iter_mut().zip(&src.data()[i * width..(i + 1) * width]) {
                    *d += w * v;
                }
            }
        }
        let mut shape = src.shape().to_vec();
        shape[0] = mix.rows.len();
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::RowMix { x, mix }))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    // ---- composites ----

    /// Rows scaled to unit Euclidean norm.
    pub fn normalize_rows(&mut self, x: Var) -> Result<Var> {
        let n = self.l2_norm(x, 1)?;
        self.div(x, n)
    }

    /// Row-wise cosine similarity of two `[n, d]` tensors, giving `[n, 1]`.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                "cosine_similarity",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let ab = self.mul(a, b)?;
        let dot = self.sum_axis(ab, 1)?;
        let na = self.l2_norm(a, 1)?;
        let nb = self.l2_norm(b, 1)?;
        let den = self.mul(na, nb)?;
        self.div(dot, den)
    }

    /// All-pairs cosine similarity of `[n, d]` and `[m, d]`, giving `[n, m]`.
    pub fn cosine_matrix(&mut self, a: Var, b: Var) -> Result<Var> {
        let an = self.normalize_rows(a)?;
        let bn = self.normalize_rows(b)?;
        self.matmul_nt(an, bn)
    }

    // ---- reverse pass ----

    /// Populates gradients of the scalar `root` with respect to every node
    /// that depends on a trainable leaf.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let rs = self.shape(root);
        if rs.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarRoot(rs.to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);
        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        self.grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.filter(|_| self.nodes[i].requires_grad)
                    .map(|g| Tensor::new(self.nodes[i].value.shape().to_vec(), g).expect("grad shape"))
            })
            .collect();
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let n = self.nodes[v.0].value.numel();
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
        f(slot);
    }

    /// Sums `g` (shaped like `out`) back into the broadcast operand `v`.
    fn accumulate_broadcast(
        &self,
        grads: &mut [Option<Vec<f64>>],
        v: Var,
        out_shape: &[usize],
        g: &[f64],
        scale: impl Fn(usize, usize) -> f64,
    ) {
        let vs = self.shape(v).to_vec();
        self.accumulate(grads, v, |slot| {
            if vs == out_shape {
                for (i, s) in slot.iter_mut().enumerate() {
                    *s += g[i] * scale(i, i);
                }
            } else {
                let bc = Broadcast::new(out_shape, &vs, &vs);
                bc.for_each(|oi, ia, _| slot[ia] += g[oi] * scale(oi, ia));
            }
        });
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[idx];
        let out = node.value.data();
        let out_shape = node.value.shape();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate_broadcast(grads, *a, out_shape, g, |_, _| 1.0);
                self.accumulate_broadcast(grads, *b, out_shape, g, |_, _| 1.0);
            }
            Op::Sub(a, b) => {
                self.accumulate_broadcast(grads, *a, out_shape, g, |_, _| 1.0);
                self.accumulate_broadcast(grads, *b, out_shape, g, |_, _| -1.0);
            }
            Op::Mul(a, b) => {
                let (sa, sb) = (self.shape(*a).to_vec(), self.shape(*b).to_vec());
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let bc = Broadcast::new(out_shape, &sa, &sb);
                let mut pa = vec![0.0; g.len()];
                let mut pb = vec![0.0; g.len()];
                bc.for_each(|oi, ia, ib| {
                    pa[oi] = vb[ib];
                    pb[oi] = va[ia];
                });
                self.accumulate_broadcast(grads, *a, out_shape, g, |oi, _| pa[oi]);
                self.accumulate_broadcast(grads, *b, out_shape, g, |oi, _| pb[oi]);
            }
            Op::Div(a, b) => {
                let (sa, sb) = (self.shape(*a).to_vec(), self.shape(*b).to_vec());
                let vb = self.value(*b).data();
                let bc = Broadcast::new(out_shape, &sa, &sb);
                let mut pa = vec![0.0; g.len()];
                let mut pb = vec![0.0; g.len()];
                bc.for_each(|oi, _, ib| {
                    pa[oi] = 1.0 / vb[ib];
                    pb[oi] = -out[oi] / vb[ib];
                });
                self.accumulate_broadcast(grads, *a, out_shape, g, |oi, _| pa[oi]);
                self.accumulate_broadcast(grads, *b, out_shape, g, |oi, _| pb[oi]);
            }
            Op::Maximum(a, b) => {
                let (sa, sb) = (self.shape(*a).to_vec(), self.shape(*b).to_vec());
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let bc = Broadcast::new(out_shape, &sa, &sb);
                let mut pick_a = vec![0.0; g.len()];
                bc.for_each(|oi, ia, ib| pick_a[oi] = if va[ia] >= vb[ib] { 1.0 } else { 0.0 });
                self.accumulate_broadcast(grads, *a, out_shape, g, |oi, _| pick_a[oi]);
                self.accumulate_broadcast(grads, *b, out_shape, g, |oi, _| 1.0 - pick_a[oi]);
            }
            Op::Neg(x) => self.accumulate(grads, *x, |s| zip_add(s, g, |gi, _| -gi)),
            Op::Scale(x, k) => self.accumulate(grads, *x, |s| zip_add(s, g, |gi, _| gi * k)),
            Op::AddScalar(x) | Op::Reshape(x) => self.accumulate(grads, *x, |s| zip_add(s, g, |gi, _| gi)),
            Op::MatMul { a, b, trans_b } => {
                let (m, k) = self.value(*a).dims2()?;
                let n = out_shape[1];
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                // dA[m,k] = G[m,n] @ B^T  (B is [k,n], or [n,k] when trans_b)
                self.accumulate(grads, *a, |slot| {
                    let (rsb, csb) = if *trans_b { (k as isize, 1) } else { (1, n as isize) };
                    gemm(m, n, k, g, n as isize, 1, bv, rsb, csb, slot, 1.0);
                });
                self.accumulate(grads, *b, |slot| {
                    if *trans_b {
                        // dB[n,k] = G^T @ A
                        gemm(n, m, k, g, 1, n as isize, av, k as isize, 1, slot, 1.0);
                    } else {
                        // dB[k,n] = A^T @ G
                        gemm(k, m, n, av, 1, k as isize, g, n as isize, 1, slot, 1.0);
                    }
                });
            }
            Op::Transpose(x) => {
                let (r, c) = self.value(*x).dims2()?;
                self.accumulate(grads, *x, |slot| {
                    for i in 0..r {
                        for j in 0..c {
                            slot[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
            Op::Sum(x) => self.accumulate(grads, *x, |s| s.iter_mut().for_each(|v| *v += g[0])),
            Op::Mean(x) => {
                let n = self.value(*x).numel() as f64;
                self.accumulate(grads, *x, |s| s.iter_mut().for_each(|v| *v += g[0] / n));
            }
            Op::SumAxis { x, axis } | Op::MeanAxis { x, axis } => {
                let scale = if matches!(node.op, Op::MeanAxis { .. }) {
                    1.0 / self.shape(*x)[*axis] as f64
                } else {
                    1.0
                };
                let (outer, len, inner) = axis_split(self.shape(*x), *axis, "reduce")?;
                self.accumulate(grads, *x, |s| {
                    for o in 0..outer {
                        for k in 0..len {
                            for i in 0..inner {
                                s[(o * len + k) * inner + i] += g[o * inner + i] * scale;
                            }
                        }
                    }
                });
            }
            Op::Exp(x) => self.accumulate(grads, *x, |s| zip_add(s, g, |gi, i| gi * out[i])),
            Op::Log(x) => {
                let v = self.value(*x).data();
                self.accumulate(grads, *x, |s| zip_add(s, g, |gi, i| gi / v[i]));
            }
            Op::Sin(x) => {
                let v = self.value(*x).data();
                self.accumulate(grads, *x, |s| zip_add(s, g, |gi, i| gi * v[i].cos()));
            }
            Op::Cos(x) => {
                let v = self.value(*x).data();
                self.accumulate(grads, *x, |s| zip_add(s, g, |gi, i| -gi * v[i].sin()));
            }
            Op::Sqrt(x) => self.accumulate(grads, *x, |s| {
                zip_add(s, g, |gi, i| if out[i] > 0.0 { gi * 0.5 / out[i] } else { 0.0 })
            }),
            Op::Tanh(x) => self.accumulate(grads, *x, |s| zip_add(s, g, |gi, i| gi * (1.0 - out[i] * out[i]))),
            Op::Sigmoid(x) => self.accumulate(grads, *x, |s| zip_add(s, g, |gi, i| gi * out[i] * (1.0 - out[i]))),
            Op::ClampMin { x, min } => {
                let v = self.value(*x).data();
                self.accumulate(grads, *x, |s| zip_add(s, g, |gi, i| if v[i] > *min { gi } else { 0.0 }));
            }
            Op::Map1 { x, dx } => self.accumulate(grads, *x, |s| zip_add(s, g, |gi, i| gi * dx[i])),
            Op::Map2 { a, b, da, db } => {
                self.accumulate(grads, *a, |s| zip_add(s, g, |gi, i| gi * da[i]));
                self.accumulate(grads, *b, |s| zip_add(s, g, |gi, i| gi * db[i]));
            }
            Op::Softmax { x, axis } => {
                let (outer, len, inner) = axis_split(out_shape, *axis, "softmax")?;
                self.accumulate(grads, *x, |s| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |k: usize| (o * len + k) * inner + i;
                            let dot: f64 = (0..len).map(|k| g[at(k)] * out[at(k)]).sum();
                            for k in 0..len {
                                s[at(k)] += out[at(k)] * (g[at(k)] - dot);
                            }
                        }
                    }
                });
            }
            Op::MaskedSoftmax { x, .. } => {
                let c = out_shape[1];
                self.accumulate(grads, *x, |s| {
                    for (r, (grow, orow)) in g.chunks(c).zip(out.chunks(c)).enumerate() {
                        let dot: f64 = grow.iter().zip(orow).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            s[r * c + j] += orow[j] * (grow[j] - dot);
                        }
                    }
                });
            }
            Op::Concat { inputs, axis } => {
                let outer: usize = out_shape[..*axis].iter().product();
                let inner: usize = out_shape[axis + 1..].iter().product();
                let total = out_shape[*axis];
                let mut offset = 0;
                for &v in inputs {
                    let len = self.shape(v)[*axis];
                    self.accumulate(grads, v, |s| {
                        for o in 0..outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset + len) * inner];
                            let dst = &mut s[o * len * inner..(o + 1) * len * inner];
                            dst.iter_mut().zip(src).for_each(|(d, gv)| *d += gv);
                        }
                    });
                    offset += len;
                }
            }
            Op::GatherRows { x, idx } => {
                let width: usize = out_shape[1..].iter().product();
                self.accumulate(grads, *x, |s| {
                    for (r, &i) in idx.iter().enumerate() {
                        let dst = &mut s[i * width..(i + 1) * width];
                        dst.iter_mut()
                            .zip(&g[r * width..(r + 1) * width])
                            .for_each(|(d, gv)| *d += gv);
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let c = self.shape(*x)[1];
                let len = out_shape[1];
                self.accumulate(grads, *x, |s| {
                    for (r, grow) in g.chunks(len).enumerate() {
                        for (d, gv) in s[r * c + start..r * c + start + len].iter_mut().zip(grow) {
                            *d += gv;
                        }
                    }
                });
            }
            Op::RowMix { x, mix } => {
                let width: usize = out_shape[1..].iter().product();
                self.accumulate(grads, *x, |s| {
                    for (r, entries) in mix.rows.iter().enumerate() {
                        let grow = &g[r * width..(r + 1) * width];
                        for &(i, w) in entries {
                            for (d, gv) in s[i * width..(i + 1) * width].iter_mut().zip(grow) {
                                *d += w * gv;
                            }
                        }
                    }
                });
            }
            Op::L2Norm { x, axis } => {
                let v = self.value(*x).data();
                let (outer, len, inner) = axis_split(self.shape(*x), *axis, "l2_norm")?;
                self.accumulate(grads, *x, |s| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let nrm = out[o * inner + i];
                            if nrm == 0.0 {
                                continue;
                            }
                            let gi = g[o * inner + i];
                            for k in 0..len {
                                let at = (o * len + k) * inner + i;
                                s[at] += gi * v[at] / nrm;
                            }
                        }
                    }
                });
            }
        }
        Ok(())
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn zip_add(slot: &mut [f64], g: &[f64], f: impl Fn(f64, usize) -> f64) {
    for (i, (s, &gi)) in slot.iter_mut().zip(g).enumerate() {
        *s += f(gi, i);
    }
}

/// `(outer, len, inner)` sizes around `axis`.
fn axis_split(shape: &[usize], axis: usize, op: &'static str) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::shape(op, format!("axis {axis} out of range for {shape:?}")));
    }
    Ok((
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    ))
}

fn reduce_axis(src: &Tensor, axis: usize, op: &'static str) -> Result<Tensor> {
    let (outer, len, inner) = axis_split(src.shape(), axis, op)?;
    let v = src.data();
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for k in 0..len {
            for i in 0..inner {
                out[o * inner + i] += v[(o * len + k) * inner + i];
            }
        }
    }
    let mut shape = src.shape().to_vec();
    shape[axis] = 1;
    Tensor::new(shape, out)
}
