//! Dense f64 tensor arithmetic with reverse-mode automatic differentiation.
//!
//! All values live on a [`Tape`]: an arena of [`Tensor`] nodes plus a linear
//! record of executed operations. Builder methods compute results eagerly and
//! record the op; [`Tape::backward`] replays the record in exact reverse order
//! accumulating vector-Jacobian products. Everything is single-threaded and
//! deterministic: identical inputs produce bit-identical outputs.

mod backward;
mod gradcheck;
mod raw;

pub use gradcheck::{grad_check, GradCheckReport};

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Handle to a tensor node on a tape. Only valid for the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorRef(pub(crate) usize);

/// A dense tensor node: row-major f64 data, rank at most 3.
#[derive(Debug, Clone)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
    pub name: Option<String>,
}

impl Tensor {
    fn new(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> Result<Self> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(Error::contract(format!(
                "tensor rank must be 1..=3, got shape {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() || shape.iter().any(|&d| d == 0 && numel != 0) {
            return Err(Error::Dim {
                op: "tensor-new",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad,
            grad: None,
            name: None,
        })
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseKind {
    Add,
    Mul,
    Sub,
}

/// One recorded operation; holds node handles plus whatever the reverse rule needs.
#[derive(Debug, Clone)]
pub(crate) enum Op {
    MatMul { a: TensorRef, b: TensorRef, out: TensorRef },
    /// out = a · bᵀ with a: m×k, b: n×k.
    MatMulNT { a: TensorRef, b: TensorRef, out: TensorRef },
    Add { a: TensorRef, b: TensorRef, out: TensorRef },
    Sub { a: TensorRef, b: TensorRef, out: TensorRef },
    Mul { a: TensorRef, b: TensorRef, out: TensorRef },
    /// Row-vector bias broadcast: a: m×d plus row: 1×d.
    AddRow { a: TensorRef, row: TensorRef, out: TensorRef },
    Scale { x: TensorRef, c: f64, out: TensorRef },
    /// Row t of x scaled by col[t]; x: m×n, col: m×1.
    RowScale { x: TensorRef, col: TensorRef, out: TensorRef },
    Activation { x: TensorRef, out: TensorRef, kind: Activation },
    /// Masked row softmax; `true` entries participate, fully-masked rows are zero.
    SoftmaxRows { x: TensorRef, out: TensorRef, mask: Option<Vec<bool>> },
    LayerNorm { x: TensorRef, gain: TensorRef, bias: TensorRef, out: TensorRef, eps: f64 },
    Embedding { table: TensorRef, out: TensorRef, ids: Vec<usize> },
    ConcatCols { a: TensorRef, b: TensorRef, out: TensorRef },
    ConcatRows { parts: Vec<TensorRef>, out: TensorRef },
    MeanRows { x: TensorRef, out: TensorRef },
    RepeatRow { x: TensorRef, out: TensorRef, n: usize },
    SliceRows { x: TensorRef, out: TensorRef, start: usize },
    /// Mask entries are 0.0 or 1/(1-p); identity at eval is never recorded.
    Dropout { x: TensorRef, out: TensorRef, mask: Vec<f64> },
    SumAll { x: TensorRef, out: TensorRef },
    /// Mean over steps of weights[t] * -ln(max(dist[t, targets[t]], FLOOR)).
    NllWeighted { dist: TensorRef, out: TensorRef, targets: Vec<usize>, weights: Vec<f64> },
    /// Mean binary cross-entropy over logits: m×1 against labels in {0,1}.
    BceWithLogits { logits: TensorRef, out: TensorRef, labels: Vec<f64> },
}

pub(crate) const NLL_FLOOR: f64 = 1e-12;

/// Execution tape: tensor arena plus the op record for the reverse pass.
pub struct Tape {
    pub(crate) nodes: Vec<Tensor>,
    pub(crate) ops: Vec<Op>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), ops: Vec::new() }
    }

    /// Drop all recorded operations and zero every gradient. Node data stays.
    pub fn clear(&mut self) {
        self.ops.clear();
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    pub fn num_ops(&self) -> usize {
        self.ops.len()
    }

    // ── node creation ────────────────────────────────────────────────

    pub fn leaf(&mut self, data: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> Result<TensorRef> {
        let t = Tensor::new(data, shape, requires_grad)?;
        self.nodes.push(t);
        Ok(TensorRef(self.nodes.len() - 1))
    }

    pub fn leaf_named(
        &mut self,
        name: &str,
        data: Vec<f64>,
        shape: Vec<usize>,
        requires_grad: bool,
    ) -> Result<TensorRef> {
        let r = self.leaf(data, shape, requires_grad)?;
        self.nodes[r.0].name = Some(name.to_string());
        Ok(r)
    }

    pub fn constant(&mut self, data: Vec<f64>, shape: Vec<usize>) -> Result<TensorRef> {
        self.leaf(data, shape, false)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Result<TensorRef> {
        self.constant(vec![0.0; rows * cols], vec![rows, cols])
    }

    // ── accessors ────────────────────────────────────────────────────

    pub fn value(&self, r: TensorRef) -> &[f64] {
        &self.nodes[r.0].data
    }

    pub fn shape(&self, r: TensorRef) -> &[usize] {
        &self.nodes[r.0].shape
    }

    pub fn grad(&self, r: TensorRef) -> Option<&[f64]> {
        self.nodes[r.0].grad.as_deref()
    }

    pub fn requires_grad(&self, r: TensorRef) -> bool {
        self.nodes[r.0].requires_grad
    }

    pub fn scalar(&self, r: TensorRef) -> Result<f64> {
        let n = &self.nodes[r.0];
        if n.numel() != 1 {
            return Err(Error::contract(format!(
                "expected scalar, got shape {:?}",
                n.shape
            )));
        }
        Ok(n.data[0])
    }

    fn dims2(&self, r: TensorRef, op: &'static str) -> Result<(usize, usize)> {
        let s = &self.nodes[r.0].shape;
        match s.len() {
            2 => Ok((s[0], s[1])),
            _ => Err(Error::Dim { op, lhs: s.clone(), rhs: vec![] }),
        }
    }

    fn push(&mut self, data: Vec<f64>, shape: Vec<usize>, requires_grad: bool, op: impl FnOnce(TensorRef) -> Op) -> Result<TensorRef> {
        let out = self.leaf(data, shape, requires_grad)?;
        self.ops.push(op(out));
        Ok(out)
    }

    // ── operations ───────────────────────────────────────────────────

    pub fn matmul(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(Error::Dim {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let data = raw::matmul(self.value(a), self.value(b), m, k, n);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(data, vec![m, n], rg, |out| Op::MatMul { a, b, out })
    }

    /// a · bᵀ for a: m×k, b: n×k.
    pub fn matmul_nt(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        let (m, k) = self.dims2(a, "matmul_nt")?;
        let (n, k2) = self.dims2(b, "matmul_nt")?;
        if k != k2 {
            return Err(Error::Dim {
                op: "matmul_nt",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let data = raw::matmul_nt(self.value(a), self.value(b), m, k, n);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(data, vec![m, n], rg, |out| Op::MatMulNT { a, b, out })
    }

    pub fn elementwise(&mut self, a: TensorRef, b: TensorRef, kind: ElementwiseKind) -> Result<TensorRef> {
        match kind {
            ElementwiseKind::Add => self.add(a, b),
            ElementwiseKind::Mul => self.mul(a, b),
            ElementwiseKind::Sub => self.sub(a, b),
        }
    }

    fn check_same_shape(&self, a: TensorRef, b: TensorRef, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dim {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        self.check_same_shape(a, b, "add")?;
        let data: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(data, shape, rg, |out| Op::Add { a, b, out })
    }

    pub fn sub(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        self.check_same_shape(a, b, "sub")?;
        let data: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(data, shape, rg, |out| Op::Sub { a, b, out })
    }

    pub fn mul(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        self.check_same_shape(a, b, "mul")?;
        let data: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(data, shape, rg, |out| Op::Mul { a, b, out })
    }

    /// Broadcast add of a 1×d row vector over every row of an m×d matrix.
    pub fn add_row(&mut self, a: TensorRef, row: TensorRef) -> Result<TensorRef> {
        let (m, d) = self.dims2(a, "add_row")?;
        let (r1, d2) = self.dims2(row, "add_row")?;
        if r1 != 1 || d != d2 {
            return Err(Error::Dim {
                op: "add_row",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(row).to_vec(),
            });
        }
        let rv = self.value(row).to_vec();
        let mut data = self.value(a).to_vec();
        for i in 0..m {
            for j in 0..d {
                data[i * d + j] += rv[j];
            }
        }
        let rg = self.requires_grad(a) || self.requires_grad(row);
        self.push(data, vec![m, d], rg, |out| Op::AddRow { a, row, out })
    }

    pub fn scale(&mut self, x: TensorRef, c: f64) -> Result<TensorRef> {
        let data: Vec<f64> = self.value(x).iter().map(|v| v * c).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.requires_grad(x);
        self.push(data, shape, rg, |out| Op::Scale { x, c, out })
    }

    /// Scale row t of x: m×n by col[t] where col: m×1.
    pub fn row_scale(&mut self, x: TensorRef, col: TensorRef) -> Result<TensorRef> {
        let (m, n) = self.dims2(x, "row_scale")?;
        let (m2, one) = self.dims2(col, "row_scale")?;
        if m != m2 || one != 1 {
            return Err(Error::Dim {
                op: "row_scale",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(col).to_vec(),
            });
        }
        let cv = self.value(col).to_vec();
        let mut data = self.value(x).to_vec();
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] *= cv[i];
            }
        }
        let rg = self.requires_grad(x) || self.requires_grad(col);
        self.push(data, vec![m, n], rg, |out| Op::RowScale { x, col, out })
    }

    pub fn activation(&mut self, x: TensorRef, kind: Activation) -> Result<TensorRef> {
        let data: Vec<f64> = self
            .value(x)
            .iter()
            .map(|&v| match kind {
                Activation::Sigmoid => raw::sigmoid(v),
                Activation::Tanh => v.tanh(),
                Activation::Relu => {
                    if v > 0.0 {
                        v
                    } else {
                        0.0
                    }
                }
            })
            .collect();
        let shape = self.shape(x).to_vec();
        let rg = self.requires_grad(x);
        self.push(data, shape, rg, |out| Op::Activation { x, out, kind })
    }

    pub fn sigmoid(&mut self, x: TensorRef) -> Result<TensorRef> {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: TensorRef) -> Result<TensorRef> {
        self.activation(x, Activation::Tanh)
    }

    pub fn relu(&mut self, x: TensorRef) -> Result<TensorRef> {
        self.activation(x, Activation::Relu)
    }

    /// Numerically-stabilized row softmax. `mask[i*n+j] = true` keeps an entry;
    /// masked entries are exactly 0 and a fully-masked row is all zeros.
    pub fn softmax_rows(&mut self, x: TensorRef, mask: Option<&[bool]>) -> Result<TensorRef> {
        let (m, n) = self.dims2(x, "softmax_rows")?;
        if let Some(mk) = mask {
            if mk.len() != m * n {
                return Err(Error::Dim {
                    op: "softmax_rows",
                    lhs: vec![m, n],
                    rhs: vec![mk.len()],
                });
            }
        }
        let xv = self.value(x);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &xv[i * n..(i + 1) * n];
            let keep = |j: usize| mask.map_or(true, |mk| mk[i * n + j]);
            let mut mx = f64::NEG_INFINITY;
            for j in 0..n {
                if keep(j) && row[j] > mx {
                    mx = row[j];
                }
            }
            if mx == f64::NEG_INFINITY {
                continue; // fully masked row stays zero
            }
            let mut denom = 0.0;
            for j in 0..n {
                if keep(j) {
                    let e = (row[j] - mx).exp();
                    data[i * n + j] = e;
                    denom += e;
                }
            }
            for j in 0..n {
                if keep(j) {
                    data[i * n + j] /= denom;
                }
            }
        }
        let rg = self.requires_grad(x);
        let mask_owned = mask.map(|mk| mk.to_vec());
        self.push(data, vec![m, n], rg, |out| Op::SoftmaxRows { x, out, mask: mask_owned })
    }

    /// Per-row standardization (population variance) then gain/bias.
    pub fn layer_norm(&mut self, x: TensorRef, gain: TensorRef, bias: TensorRef, eps: f64) -> Result<TensorRef> {
        if eps <= 0.0 {
            return Err(Error::contract(format!("layer_norm eps must be > 0, got {eps}")));
        }
        let (m, d) = self.dims2(x, "layer_norm")?;
        for (r, label) in [(gain, "gain"), (bias, "bias")] {
            let (one, d2) = self.dims2(r, "layer_norm")?;
            if one != 1 || d2 != d {
                return Err(Error::Dim {
                    op: "layer_norm",
                    lhs: vec![m, d],
                    rhs: self.shape(r).to_vec(),
                });
            }
            let _ = label;
        }
        let xv = self.value(x);
        let g = self.value(gain).to_vec();
        let b = self.value(bias).to_vec();
        let mut data = vec![0.0; m * d];
        for i in 0..m {
            let row = &xv[i * d..(i + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..d {
                data[i * d + j] = (row[j] - mean) * inv * g[j] + b[j];
            }
        }
        let rg = self.requires_grad(x) || self.requires_grad(gain) || self.requires_grad(bias);
        self.push(data, vec![m, d], rg, |out| Op::LayerNorm { x, gain, bias, out, eps })
    }

    /// Gather rows of a V×d table; the reverse pass scatter-adds into the table.
    pub fn embedding(&mut self, table: TensorRef, ids: &[usize]) -> Result<TensorRef> {
        let (v, d) = self.dims2(table, "embedding")?;
        for &id in ids {
            if id >= v {
                return Err(Error::Index { what: "embedding id", index: id, size: v });
            }
        }
        let tv = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            data.extend_from_slice(&tv[id * d..(id + 1) * d]);
        }
        let rg = self.requires_grad(table);
        let ids = ids.to_vec();
        self.push(data, vec![ids.len(), d], rg, |out| Op::Embedding { table, out, ids })
    }

    pub fn concat_cols(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        let (m, d1) = self.dims2(a, "concat_cols")?;
        let (m2, d2) = self.dims2(b, "concat_cols")?;
        if m != m2 {
            return Err(Error::Dim {
                op: "concat_cols",
                lhs: vec![m, d1],
                rhs: vec![m2, d2],
            });
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut data = Vec::with_capacity(m * (d1 + d2));
        for i in 0..m {
            data.extend_from_slice(&av[i * d1..(i + 1) * d1]);
            data.extend_from_slice(&bv[i * d2..(i + 1) * d2]);
        }
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(data, vec![m, d1 + d2], rg, |out| Op::ConcatCols { a, b, out })
    }

    /// Stack matrices with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[TensorRef]) -> Result<TensorRef> {
        if parts.is_empty() {
            return Err(Error::contract("concat_rows needs at least one part".to_string()));
        }
        let (_, d) = self.dims2(parts[0], "concat_rows")?;
        let mut rows = 0;
        for &p in parts {
            let (m, d2) = self.dims2(p, "concat_rows")?;
            if d2 != d {
                return Err(Error::Dim {
                    op: "concat_rows",
                    lhs: vec![rows, d],
                    rhs: vec![m, d2],
                });
            }
            rows += m;
        }
        let mut data = Vec::with_capacity(rows * d);
        let mut rg = false;
        for &p in parts {
            data.extend_from_slice(self.value(p));
            rg |= self.requires_grad(p);
        }
        let parts = parts.to_vec();
        self.push(data, vec![rows, d], rg, |out| Op::ConcatRows { parts, out })
    }

    /// Arithmetic mean of the rows: m×d → 1×d. Sums first, divides once.
    pub fn mean_rows(&mut self, x: TensorRef) -> Result<TensorRef> {
        let (m, d) = self.dims2(x, "mean_rows")?;
        if m == 0 {
            return Err(Error::contract("mean_rows over zero rows".to_string()));
        }
        let xv = self.value(x);
        let mut data = vec![0.0; d];
        for i in 0..m {
            for j in 0..d {
                data[j] += xv[i * d + j];
            }
        }
        for v in &mut data {
            *v /= m as f64;
        }
        let rg = self.requires_grad(x);
        self.push(data, vec![1, d], rg, |out| Op::MeanRows { x, out })
    }

    /// Broadcast a 1×d row to n×d.
    pub fn repeat_row(&mut self, x: TensorRef, n: usize) -> Result<TensorRef> {
        let (one, d) = self.dims2(x, "repeat_row")?;
        if one != 1 {
            return Err(Error::Dim { op: "repeat_row", lhs: self.shape(x).to_vec(), rhs: vec![1, d] });
        }
        let row = self.value(x).to_vec();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            data.extend_from_slice(&row);
        }
        let rg = self.requires_grad(x);
        self.push(data, vec![n, d], rg, |out| Op::RepeatRow { x, out, n })
    }

    pub fn slice_rows(&mut self, x: TensorRef, start: usize, len: usize) -> Result<TensorRef> {
        let (m, d) = self.dims2(x, "slice_rows")?;
        if start + len > m {
            return Err(Error::Index { what: "row slice", index: start + len, size: m });
        }
        let data = self.value(x)[start * d..(start + len) * d].to_vec();
        let rg = self.requires_grad(x);
        self.push(data, vec![len, d], rg, |out| Op::SliceRows { x, out, start })
    }

    /// Inverted dropout with a caller-provided seed; identity (not recorded) at
    /// eval or when p = 0.
    pub fn dropout(&mut self, x: TensorRef, p: f64, seed: u64, train: bool) -> Result<TensorRef> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::contract(format!("dropout p must be in [0,1), got {p}")));
        }
        if !train || p == 0.0 {
            return Ok(x);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep_scale = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.nodes[x.0].numel())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep_scale })
            .collect();
        let data: Vec<f64> = self.value(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.requires_grad(x);
        self.push(data, shape, rg, |out| Op::Dropout { x, out, mask })
    }

    pub fn sum_all(&mut self, x: TensorRef) -> Result<TensorRef> {
        let total: f64 = self.value(x).iter().sum();
        let rg = self.requires_grad(x);
        self.push(vec![total], vec![1, 1], rg, |out| Op::SumAll { x, out })
    }

    /// Mean over steps of `weights[t] * -ln(dist[t, targets[t]])` with the
    /// probability floored at 1e-12. `dist` rows are probabilities, not logits.
    pub fn nll_weighted(&mut self, dist: TensorRef, targets: &[usize], weights: &[f64]) -> Result<TensorRef> {
        let (m, v) = self.dims2(dist, "nll_weighted")?;
        if targets.len() != m || weights.len() != m {
            return Err(Error::Dim {
                op: "nll_weighted",
                lhs: vec![m, v],
                rhs: vec![targets.len(), weights.len()],
            });
        }
        for &t in targets {
            if t >= v {
                return Err(Error::Index { what: "nll target", index: t, size: v });
            }
        }
        let dv = self.value(dist);
        let mut total = 0.0;
        for t in 0..m {
            let p = dv[t * v + targets[t]].max(NLL_FLOOR);
            total += weights[t] * -p.ln();
        }
        let loss = total / m as f64;
        if !loss.is_finite() {
            return Err(Error::numeric(format!("non-finite loss {loss}")));
        }
        let rg = self.requires_grad(dist);
        let targets = targets.to_vec();
        let weights = weights.to_vec();
        self.push(vec![loss], vec![1, 1], rg, |out| Op::NllWeighted { dist, out, targets, weights })
    }

    /// Mean binary cross-entropy of logits (m×1) against labels in {0,1}.
    pub fn bce_with_logits(&mut self, logits: TensorRef, labels: &[f64]) -> Result<TensorRef> {
        let (m, one) = self.dims2(logits, "bce_with_logits")?;
        if one != 1 || labels.len() != m {
            return Err(Error::Dim {
                op: "bce_with_logits",
                lhs: vec![m, one],
                rhs: vec![labels.len(), 1],
            });
        }
        let lv = self.value(logits);
        let mut total = 0.0;
        for (s, y) in lv.iter().zip(labels) {
            // max(s,0) - s*y + ln(1 + exp(-|s|)), the stable BCE form
            total += s.max(0.0) - s * y + (-s.abs()).exp().ln_1p();
        }
        let loss = total / m as f64;
        let rg = self.requires_grad(logits);
        let labels = labels.to_vec();
        self.push(vec![loss], vec![1, 1], rg, |out| Op::BceWithLogits { logits, out, labels })
    }

    // ── reverse pass ─────────────────────────────────────────────────

    /// Seed d(loss)=1 and replay the op record in reverse, accumulating
    /// gradients into every node with `requires_grad`.
    pub fn backward(&mut self, loss: TensorRef) -> Result<()> {
        let n = &self.nodes[loss.0];
        if n.numel() != 1 {
            return Err(Error::contract(format!(
                "backward root must be scalar, got shape {:?}",
                n.shape
            )));
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for idx in (0..self.ops.len()).rev() {
            let op = self.ops[idx].clone();
            self.apply_reverse(&op);
        }
        Ok(())
    }

    pub(crate) fn accumulate(&mut self, r: TensorRef, delta: &[f64]) {
        if !self.nodes[r.0].requires_grad {
            return;
        }
        match &mut self.nodes[r.0].grad {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => self.nodes[r.0].grad = Some(delta.to_vec()),
        }
    }

    pub(crate) fn out_grad(&self, r: TensorRef) -> Option<Vec<f64>> {
        self.nodes[r.0].grad.clone()
    }
}
