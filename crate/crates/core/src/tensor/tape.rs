use rand::Rng;

use super::array::{gemm, Operand};
use super::params::{ParamId, ParamStore};
use super::Tensor;
use crate::error::{dim_err, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Tensor),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Transpose(Var),
    MeanRows(Var),
    MeanCols(Var),
    SumAll(Var),
    RepeatRows(Var),
    Softmax(Var),
    CausalSoftmax(Var),
    PrefixSoftmax(Var, Vec<usize>),
    SegmentSoftmax(Var, Vec<usize>),
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    LeakyRelu(Var, f64),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    Bce(Var, Vec<bool>),
    CrossEntropy(Var, Vec<usize>),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
}

/// Records a forward computation so it can be differentiated in reverse.
///
/// Parameters are borrowed from a [`ParamStore`]; each parameter gets at most
/// one leaf node per tape.
pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    mode: Mode,
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(id.0).and_then(Option::as_ref)
    }

    /// Parameter gradients indexed by [`ParamId`].
    pub fn into_param_grads(self) -> Vec<Option<Tensor>> {
        self.params
    }
}

fn stable_softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / SQRT_2));
    cdf + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn softmax_backward(y: &[f64], dy: &[f64], dx: &mut [f64]) {
    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
    for ((d, &yi), &dyi) in dx.iter_mut().zip(y).zip(dy) {
        *d += yi * (dyi - dot);
    }
}

/// Number of visible keys for query row `i` of a causal `rows × cols` score
/// matrix whose queries are the last `rows` positions.
fn causal_width(i: usize, rows: usize, cols: usize) -> usize {
    i + 1 + cols - rows
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore, mode: Mode) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
            mode,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].op {
            Op::Param(id) => self.store.get(*id),
            _ => self.nodes[v.0]
                .value
                .as_ref()
                .expect("non-parameter node has a value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        if cfg!(debug_assertions) && !value.all_finite() {
            let inputs_finite = self.op_inputs(&op).iter().all(|&i| self.value(i).all_finite());
            debug_assert!(
                !inputs_finite,
                "non-finite output from finite inputs in {op:?}"
            );
        }
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn op_inputs(&self, op: &Op) -> Vec<Var> {
        match op {
            Op::Leaf | Op::Param(_) => vec![],
            Op::MatMul(a, b)
            | Op::MatMulNT(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MulCol(a, b) => vec![*a, *b],
            Op::ConcatCols(v) | Op::ConcatRows(v) => v.clone(),
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Scale(a, _)
            | Op::MulConst(a, _)
            | Op::SliceCols(a, _)
            | Op::SliceRows(a, _)
            | Op::Transpose(a)
            | Op::MeanRows(a)
            | Op::MeanCols(a)
            | Op::SumAll(a)
            | Op::RepeatRows(a)
            | Op::Softmax(a)
            | Op::CausalSoftmax(a)
            | Op::PrefixSoftmax(a, _)
            | Op::SegmentSoftmax(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Gelu(a)
            | Op::LeakyRelu(a, _)
            | Op::GatherRows(a, _)
            | Op::ScatterAddRows(a, _)
            | Op::Bce(a, _)
            | Op::CrossEntropy(a, _) => vec![*a],
        }
    }

    /// Records a non-trainable input (its gradient is still available).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: Some(t),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    fn matrix_dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let t = self.value(v);
        match t.shape().len() {
            1 | 2 => Ok((t.rows(), t.cols())),
            _ => Err(dim_err(op, t.shape(), &[2])),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims(a, "matmul")?;
        let (k2, n) = self.matrix_dims(b, "matmul")?;
        if k != k2 {
            return Err(dim_err("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            Operand::plain(self.value(a).data(), k),
            Operand::plain(self.value(b).data(), n),
            &mut out,
            0.0,
        );
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b)))
    }

    /// `a · bᵀ` without materialising the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims(a, "matmul_nt")?;
        let (n, k2) = self.matrix_dims(b, "matmul_nt")?;
        if k != k2 {
            return Err(dim_err("matmul_nt", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            Operand::plain(self.value(a).data(), k),
            Operand::t(self.value(b).data(), k),
            &mut out,
            0.0,
        );
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMulNT(a, b)))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(dim_err(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Adds a length-`n` row vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims(a, "add_row")?;
        if self.value(bias).len() != n {
            return Err(dim_err("add_row", self.shape(a), self.shape(bias)));
        }
        let mut out = self.value(a).clone();
        let b = self.value(bias).data();
        for r in 0..m {
            for (o, &bv) in out.row_mut(r).iter_mut().zip(b) {
                *o += bv;
            }
        }
        Ok(self.push(out, Op::AddRow(a, bias)))
    }

    /// Scales row `i` of `a` by `s[i]`; `s` has one entry per row.
    pub fn mul_col(&mut self, a: Var, s: Var) -> Result<Var> {
        let (m, _) = self.matrix_dims(a, "mul_col")?;
        if self.value(s).len() != m {
            return Err(dim_err("mul_col", self.shape(a), self.shape(s)));
        }
        let mut out = self.value(a).clone();
        let sv = self.value(s).data().to_vec();
        for (r, &k) in sv.iter().enumerate() {
            for o in out.row_mut(r) {
                *o *= k;
            }
        }
        Ok(self.push(out, Op::MulCol(a, s)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x * k);
        self.push(out, Op::Scale(a, k))
    }

    /// Elementwise product with a constant of the same shape.
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        if self.shape(a) != c.shape() {
            return Err(dim_err("mul_const", self.shape(a), c.shape()));
        }
        let out = self.value(a).zip_map(&c, |x, y| x * y)?;
        Ok(self.push(out, Op::MulConst(a, c)))
    }

    /// Concatenation along `axis` (0 = rows, 1 = columns) of 2-D values.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Contract("concat of zero tensors".into()));
        }
        match axis {
            0 => {
                let cols = self.matrix_dims(parts[0], "concat")?.1;
                let mut data = Vec::new();
                let mut rows = 0;
                for &p in parts {
                    let (r, c) = self.matrix_dims(p, "concat")?;
                    if c != cols {
                        return Err(dim_err("concat", self.shape(parts[0]), self.shape(p)));
                    }
                    rows += r;
                    data.extend_from_slice(self.value(p).data());
                }
                let out = Tensor::new(&[rows, cols], data)?;
                Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
            }
            1 => {
                let rows = self.matrix_dims(parts[0], "concat")?.0;
                let mut total = 0;
                for &p in parts {
                    let (r, c) = self.matrix_dims(p, "concat")?;
                    if r != rows {
                        return Err(dim_err("concat", self.shape(parts[0]), self.shape(p)));
                    }
                    total += c;
                }
                let mut out = Tensor::zeros(&[rows, total]);
                let mut off = 0;
                for &p in parts {
                    let v = self.value(p);
                    let c = v.cols();
                    for r in 0..rows {
                        out.row_mut(r)[off..off + c].copy_from_slice(v.row(r));
                    }
                    off += c;
                }
                Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
            }
            _ => Err(Error::Contract(format!("concat axis {axis} unsupported"))),
        }
    }

    /// Half-open slice `[start, end)` along `axis` of a 2-D value.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.matrix_dims(a, "slice")?;
        let limit = if axis == 0 { m } else { n };
        if start > end || end > limit || axis > 1 {
            return Err(dim_err("slice", self.shape(a), &[axis, start, end]));
        }
        let v = self.value(a);
        if axis == 0 {
            let out = Tensor::new(&[end - start, n], v.data()[start * n..end * n].to_vec())?;
            Ok(self.push(out, Op::SliceRows(a, start)))
        } else {
            let w = end - start;
            let mut data = Vec::with_capacity(m * w);
            for r in 0..m {
                data.extend_from_slice(&v.row(r)[start..end]);
            }
            let out = Tensor::new(&[m, w], data)?;
            Ok(self.push(out, Op::SliceCols(a, start)))
        }
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims(a, "transpose")?;
        let out = self.value(a).clone().reshape(&[m, n])?.transpose()?;
        Ok(self.push(out, Op::Transpose(a)))
    }

    /// Mean over `axis`: 0 gives a `1×n` row, 1 gives an `m×1` column.
    pub fn mean_over(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (m, n) = self.matrix_dims(a, "mean_over")?;
        let v = self.value(a);
        match axis {
            0 => {
                if m == 0 {
                    return Err(Error::Contract("mean over zero rows".into()));
                }
                let mut out = vec![0.0; n];
                for r in 0..m {
                    for (o, x) in out.iter_mut().zip(v.row(r)) {
                        *o += x;
                    }
                }
                for o in &mut out {
                    *o /= m as f64;
                }
                let t = Tensor::new(&[1, n], out)?;
                Ok(self.push(t, Op::MeanRows(a)))
            }
            1 => {
                if n == 0 {
                    return Err(Error::Contract("mean over zero columns".into()));
                }
                let out: Vec<f64> = (0..m).map(|r| v.row(r).iter().sum::<f64>() / n as f64).collect();
                let t = Tensor::new(&[m, 1], out)?;
                Ok(self.push(t, Op::MeanCols(a)))
            }
            _ => Err(Error::Contract(format!("mean axis {axis} unsupported"))),
        }
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    /// Tiles a single row `times` times.
    pub fn repeat_rows(&mut self, a: Var, times: usize) -> Result<Var> {
        let (m, n) = self.matrix_dims(a, "repeat_rows")?;
        if m != 1 {
            return Err(dim_err("repeat_rows", self.shape(a), &[1, n]));
        }
        let row = self.value(a).data().to_vec();
        let mut data = Vec::with_capacity(times * n);
        for _ in 0..times {
            data.extend_from_slice(&row);
        }
        Ok(self.push(Tensor::new(&[times, n], data)?, Op::RepeatRows(a)))
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims(a, "softmax_rows")?;
        let mut out = self.value(a).clone().reshape(&[m, n])?;
        for r in 0..m {
            softmax_in_place(out.row_mut(r));
        }
        Ok(self.push(out, Op::Softmax(a)))
    }

    /// Row-wise softmax where query row `i` only sees keys `0..=i` (offset so
    /// the last query row sees every key). Hidden entries are exactly zero.
    pub fn causal_softmax(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims(a, "causal_softmax")?;
        if m > n {
            return Err(dim_err("causal_softmax", self.shape(a), &[n, n]));
        }
        let mut out = self.value(a).clone().reshape(&[m, n])?;
        for r in 0..m {
            let w = causal_width(r, m, n);
            let row = out.row_mut(r);
            softmax_in_place(&mut row[..w]);
            for v in &mut row[w..] {
                *v = 0.0;
            }
        }
        Ok(self.push(out, Op::CausalSoftmax(a)))
    }

    /// Row-wise softmax where row `r` only sees its first `widths[r]` entries
    /// (each width in `1..=cols`). Hidden entries are exactly zero.
    pub fn prefix_softmax(&mut self, a: Var, widths: &[usize]) -> Result<Var> {
        let (m, n) = self.matrix_dims(a, "prefix_softmax")?;
        if widths.len() != m || widths.iter().any(|&w| w == 0 || w > n) {
            return Err(Error::Contract(format!(
                "prefix_softmax: widths must give one value in 1..={n} per row ({m} rows)"
            )));
        }
        let mut out = self.value(a).clone().reshape(&[m, n])?;
        for (r, &w) in widths.iter().enumerate() {
            let row = out.row_mut(r);
            softmax_in_place(&mut row[..w]);
            for v in &mut row[w..] {
                *v = 0.0;
            }
        }
        Ok(self.push(out, Op::PrefixSoftmax(a, widths.to_vec())))
    }

    /// Softmax over groups of entries sharing a segment id.
    pub fn segment_softmax(&mut self, a: Var, segments: &[usize]) -> Result<Var> {
        let v = self.value(a);
        if v.len() != segments.len() {
            return Err(dim_err("segment_softmax", v.shape(), &[segments.len()]));
        }
        let nseg = segments.iter().max().map_or(0, |m| m + 1);
        let mut max = vec![f64::NEG_INFINITY; nseg];
        for (&x, &s) in v.data().iter().zip(segments) {
            max[s] = max[s].max(x);
        }
        let mut out = v.clone();
        let mut sum = vec![0.0; nseg];
        for (o, &s) in out.data_mut().iter_mut().zip(segments) {
            *o = (*o - max[s]).exp();
            sum[s] += *o;
        }
        for (o, &s) in out.data_mut().iter_mut().zip(segments) {
            *o /= sum[s];
        }
        Ok(self.push(out, Op::SegmentSoftmax(a, segments.to_vec())))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(gelu);
        self.push(out, Op::Gelu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(out, Op::LeakyRelu(a, slope))
    }

    /// Inverted dropout. Identity in eval mode or when `p == 0`.
    pub fn dropout<R: Rng>(&mut self, a: Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Contract(format!("dropout rate {p} outside [0, 1)")));
        }
        if self.mode == Mode::Eval || p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let shape = self.shape(a).to_vec();
        let n: usize = shape.iter().product();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        self.mul_const(a, Tensor::new(&shape, mask)?)
    }

    /// Selects rows by index (embedding lookup).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (m, n) = self.matrix_dims(a, "gather_rows")?;
        let v = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            if i >= m {
                return Err(dim_err("gather_rows", v.shape(), &[i]));
            }
            data.extend_from_slice(v.row(i));
        }
        let out = Tensor::new(&[idx.len(), n], data)?;
        Ok(self.push(out, Op::GatherRows(a, idx.to_vec())))
    }

    pub fn embedding_lookup(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        self.gather_rows(table, idx)
    }

    /// Sums row `e` of `a` into output row `idx[e]`; output has `rows` rows.
    pub fn scatter_add_rows(&mut self, a: Var, idx: &[usize], rows: usize) -> Result<Var> {
        let (m, n) = self.matrix_dims(a, "scatter_add_rows")?;
        if m != idx.len() || idx.iter().any(|&i| i >= rows) {
            return Err(dim_err("scatter_add_rows", self.shape(a), &[idx.len(), rows]));
        }
        let mut out = Tensor::zeros(&[rows, n]);
        let v = self.value(a);
        for (e, &i) in idx.iter().enumerate() {
            for (o, x) in out.row_mut(i).iter_mut().zip(v.row(e)) {
                *o += x;
            }
        }
        let _ = m;
        Ok(self.push(out, Op::ScatterAddRows(a, idx.to_vec())))
    }

    /// Row-wise layer normalisation with affine parameters.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "layer_norm")?;
        if self.value(gamma).len() != n || self.value(beta).len() != n {
            return Err(dim_err("layer_norm", self.shape(x), self.shape(gamma)));
        }
        let xv = self.value(x);
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = Tensor::zeros(&[m, n]);
        let mut out = Tensor::zeros(&[m, n]);
        let mut inv_std = Vec::with_capacity(m);
        for r in 0..m {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            let xh = xhat.row_mut(r);
            for (h, v) in xh.iter_mut().zip(row) {
                *h = (v - mean) * is;
            }
            let xh = xhat.row(r).to_vec();
            for (j, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = xh[j] * g[j] + b[j];
            }
        }
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    /// Summed binary cross-entropy on logits; `labels[k]` marks positives.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[bool]) -> Result<Var> {
        let v = self.value(logits);
        if v.len() != labels.len() {
            return Err(dim_err("bce_with_logits", v.shape(), &[labels.len()]));
        }
        if labels.is_empty() {
            return Err(Error::Contract("bce_with_logits needs at least one logit".into()));
        }
        let loss: f64 = v
            .data()
            .iter()
            .zip(labels)
            .map(|(&x, &pos)| if pos { stable_softplus(-x) } else { stable_softplus(x) })
            .sum();
        Ok(self.push(Tensor::scalar(loss), Op::Bce(logits, labels.to_vec())))
    }

    /// Mean over rows of `-log softmax(row)[class]`.
    pub fn cross_entropy(&mut self, logits: Var, classes: &[usize]) -> Result<Var> {
        let (m, n) = self.matrix_dims(logits, "cross_entropy")?;
        if m != classes.len() || m == 0 {
            return Err(dim_err("cross_entropy", self.shape(logits), &[classes.len()]));
        }
        let v = self.value(logits);
        let mut loss = 0.0;
        for (r, &c) in classes.iter().enumerate() {
            if c >= n {
                return Err(Error::Contract(format!("class {c} outside {n} logits")));
            }
            let row = v.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            loss += lse - row[c];
        }
        Ok(self.push(
            Tensor::scalar(loss / m as f64),
            Op::CrossEntropy(logits, classes.to_vec()),
        ))
    }

    /// Reverse pass from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backward_node(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        let mut params: Vec<Option<Tensor>> = (0..self.store.len()).map(|_| None).collect();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                params[id.0] = grads[i].clone();
            }
        }
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }

    fn backward_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let out = node.value.as_ref();
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                let mut da = vec![0.0; m * k];
                gemm(m, n, k, Operand::plain(g.data(), n), Operand::t(bv.data(), n), &mut da, 0.0);
                let mut db = vec![0.0; k * n];
                gemm(k, m, n, Operand::t(av.data(), k), Operand::plain(g.data(), n), &mut db, 0.0);
                accumulate(grads, *a, Tensor::new(av.shape(), da)?)?;
                accumulate(grads, *b, Tensor::new(bv.shape(), db)?)?;
            }
            Op::MatMulNT(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k, n) = (av.rows(), av.cols(), bv.rows());
                let mut da = vec![0.0; m * k];
                gemm(m, n, k, Operand::plain(g.data(), n), Operand::plain(bv.data(), k), &mut da, 0.0);
                let mut db = vec![0.0; n * k];
                gemm(n, m, k, Operand::t(g.data(), n), Operand::plain(av.data(), k), &mut db, 0.0);
                accumulate(grads, *a, Tensor::new(av.shape(), da)?)?;
                accumulate(grads, *b, Tensor::new(bv.shape(), db)?)?;
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone())?;
                accumulate(grads, *b, g.clone())?;
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone())?;
                accumulate(grads, *b, g.map(|x| -x))?;
            }
            Op::Mul(a, b) => {
                let da = g.zip_map(self.value(*b), |x, y| x * y)?;
                let db = g.zip_map(self.value(*a), |x, y| x * y)?;
                accumulate(grads, *a, da)?;
                accumulate(grads, *b, db)?;
            }
            Op::AddRow(a, bias) => {
                let n = g.cols();
                let mut db = vec![0.0; n];
                for r in 0..g.rows() {
                    for (d, x) in db.iter_mut().zip(g.row(r)) {
                        *d += x;
                    }
                }
                accumulate(grads, *a, g.clone())?;
                let bshape = self.shape(*bias).to_vec();
                accumulate(grads, *bias, Tensor::new(&bshape, db)?)?;
            }
            Op::MulCol(a, s) => {
                let av = self.value(*a);
                let sv = self.value(*s);
                let mut da = g.clone();
                let mut ds = vec![0.0; sv.len()];
                for r in 0..g.rows() {
                    let k = sv.data()[r];
                    ds[r] = g.row(r).iter().zip(av.row(r)).map(|(x, y)| x * y).sum();
                    for d in da.row_mut(r) {
                        *d *= k;
                    }
                }
                accumulate(grads, *a, da)?;
                accumulate(grads, *s, Tensor::new(sv.shape(), ds)?)?;
            }
            Op::Scale(a, k) => accumulate(grads, *a, g.map(|x| x * k))?,
            Op::MulConst(a, c) => accumulate(grads, *a, g.zip_map(c, |x, y| x * y)?)?,
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let shape = self.shape(p).to_vec();
                    let c = self.value(p).cols();
                    let mut d = Vec::with_capacity(g.rows() * c);
                    for r in 0..g.rows() {
                        d.extend_from_slice(&g.row(r)[off..off + c]);
                    }
                    off += c;
                    accumulate(grads, p, Tensor::new(&shape, d)?)?;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let shape = self.shape(p).to_vec();
                    let n = self.value(p).len();
                    accumulate(grads, p, Tensor::new(&shape, g.data()[off..off + n].to_vec())?)?;
                    off += n;
                }
            }
            Op::SliceRows(a, start) => {
                let av = self.value(*a);
                let mut d = Tensor::zeros(av.shape());
                let n = av.cols();
                d.data_mut()[start * n..start * n + g.len()].copy_from_slice(g.data());
                accumulate(grads, *a, d)?;
            }
            Op::SliceCols(a, start) => {
                let av = self.value(*a);
                let mut d = Tensor::zeros(av.shape());
                let w = g.cols();
                for r in 0..g.rows() {
                    d.row_mut(r)[*start..start + w].copy_from_slice(g.row(r));
                }
                accumulate(grads, *a, d)?;
            }
            Op::Transpose(a) => {
                let shape = self.shape(*a).to_vec();
                let d = g.transpose()?.reshape(&shape)?;
                accumulate(grads, *a, d)?;
            }
            Op::MeanRows(a) => {
                let av = self.value(*a);
                let m = av.rows();
                let mut d = Tensor::zeros(av.shape());
                for r in 0..m {
                    for (o, x) in d.row_mut(r).iter_mut().zip(g.data()) {
                        *o = x / m as f64;
                    }
                }
                accumulate(grads, *a, d)?;
            }
            Op::MeanCols(a) => {
                let av = self.value(*a);
                let n = av.cols();
                let mut d = Tensor::zeros(av.shape());
                for r in 0..av.rows() {
                    let gr = g.data()[r] / n as f64;
                    for o in d.row_mut(r) {
                        *o = gr;
                    }
                }
                accumulate(grads, *a, d)?;
            }
            Op::SumAll(a) => {
                let d = Tensor::full(self.shape(*a), g.item());
                accumulate(grads, *a, d)?;
            }
            Op::RepeatRows(a) => {
                let n = g.cols();
                let mut d = vec![0.0; n];
                for r in 0..g.rows() {
                    for (o, x) in d.iter_mut().zip(g.row(r)) {
                        *o += x;
                    }
                }
                let shape = self.shape(*a).to_vec();
                accumulate(grads, *a, Tensor::new(&shape, d)?)?;
            }
            Op::Softmax(a) | Op::CausalSoftmax(a) => {
                let y = out.expect("value");
                let shape = self.shape(*a).to_vec();
                let mut d = Tensor::zeros(y.shape());
                let (m, n) = (y.rows(), y.cols());
                let causal = matches!(node.op, Op::CausalSoftmax(_));
                for r in 0..m {
                    let w = if causal { causal_width(r, m, n) } else { n };
                    softmax_backward(&y.row(r)[..w], &g.row(r)[..w], &mut d.row_mut(r)[..w]);
                }
                accumulate(grads, *a, d.reshape(&shape)?)?;
            }
            Op::PrefixSoftmax(a, widths) => {
                let y = out.expect("value");
                let shape = self.shape(*a).to_vec();
                let mut d = Tensor::zeros(y.shape());
                for (r, &w) in widths.iter().enumerate() {
                    softmax_backward(&y.row(r)[..w], &g.row(r)[..w], &mut d.row_mut(r)[..w]);
                }
                accumulate(grads, *a, d.reshape(&shape)?)?;
            }
            Op::SegmentSoftmax(a, segs) => {
                let y = out.expect("value");
                let nseg = segs.iter().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; nseg];
                for ((&yi, &gi), &s) in y.data().iter().zip(g.data()).zip(segs) {
                    dot[s] += yi * gi;
                }
                let d: Vec<f64> = y
                    .data()
                    .iter()
                    .zip(g.data())
                    .zip(segs)
                    .map(|((&yi, &gi), &s)| yi * (gi - dot[s]))
                    .collect();
                accumulate(grads, *a, Tensor::new(y.shape(), d)?)?;
            }
            Op::Sigmoid(a) => {
                let y = out.expect("value");
                accumulate(grads, *a, g.zip_map(y, |gi, yi| gi * yi * (1.0 - yi))?)?;
            }
            Op::Tanh(a) => {
                let y = out.expect("value");
                accumulate(grads, *a, g.zip_map(y, |gi, yi| gi * (1.0 - yi * yi))?)?;
            }
            Op::Gelu(a) => {
                let x = self.value(*a);
                accumulate(grads, *a, g.zip_map(x, |gi, xi| gi * gelu_grad(xi))?)?;
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                let d = g.zip_map(x, |gi, xi| if xi > 0.0 { gi } else { gi * slope })?;
                accumulate(grads, *a, d)?;
            }
            Op::GatherRows(a, idx) => {
                let av = self.value(*a);
                let mut d = Tensor::zeros(av.shape());
                for (e, &i) in idx.iter().enumerate() {
                    for (o, x) in d.row_mut(i).iter_mut().zip(g.row(e)) {
                        *o += x;
                    }
                }
                accumulate(grads, *a, d)?;
            }
            Op::ScatterAddRows(a, idx) => {
                let shape = self.shape(*a).to_vec();
                let n = g.cols();
                let mut d = Vec::with_capacity(idx.len() * n);
                for &i in idx {
                    d.extend_from_slice(g.row(i));
                }
                accumulate(grads, *a, Tensor::new(&shape, d)?)?;
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gv = self.value(*gamma);
                let (m, n) = (xhat.rows(), xhat.cols());
                let mut dx = Tensor::zeros(&[m, n]);
                let mut dgamma = vec![0.0; n];
                let mut dbeta = vec![0.0; n];
                for r in 0..m {
                    let gr = g.row(r);
                    let xh = xhat.row(r);
                    let mut sum_d = 0.0;
                    let mut sum_dx = 0.0;
                    let mut dxhat = vec![0.0; n];
                    for j in 0..n {
                        dgamma[j] += gr[j] * xh[j];
                        dbeta[j] += gr[j];
                        dxhat[j] = gr[j] * gv.data()[j];
                        sum_d += dxhat[j];
                        sum_dx += dxhat[j] * xh[j];
                    }
                    let k = inv_std[r] / n as f64;
                    for (j, o) in dx.row_mut(r).iter_mut().enumerate() {
                        *o = k * (n as f64 * dxhat[j] - sum_d - xh[j] * sum_dx);
                    }
                }
                let xshape = self.shape(*x).to_vec();
                let gshape = gv.shape().to_vec();
                let bshape = self.shape(*beta).to_vec();
                accumulate(grads, *x, dx.reshape(&xshape)?)?;
                accumulate(grads, *gamma, Tensor::new(&gshape, dgamma)?)?;
                accumulate(grads, *beta, Tensor::new(&bshape, dbeta)?)?;
            }
            Op::Bce(a, labels) => {
                let x = self.value(*a);
                let k = g.item();
                let d: Vec<f64> = x
                    .data()
                    .iter()
                    .zip(labels)
                    .map(|(&xi, &pos)| k * (sigmoid(xi) - if pos { 1.0 } else { 0.0 }))
                    .collect();
                accumulate(grads, *a, Tensor::new(x.shape(), d)?)?;
            }
            Op::CrossEntropy(a, classes) => {
                let x = self.value(*a);
                let m = classes.len();
                let k = g.item() / m as f64;
                let mut d = x.clone();
                for (r, &c) in classes.iter().enumerate() {
                    let row = d.row_mut(r);
                    softmax_in_place(row);
                    row[c] -= 1.0;
                    for v in row.iter_mut() {
                        *v *= k;
                    }
                }
                accumulate(grads, *a, d)?;
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, d: Tensor) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&d),
        slot @ None => {
            *slot = Some(d);
            Ok(())
        }
    }
}
