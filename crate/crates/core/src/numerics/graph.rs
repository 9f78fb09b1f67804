//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as a node in creation order, so the node
//! list is already topologically sorted and `backward` is a single reverse sweep.
//! Leaves are either constants or bound parameters (identified by [`ParamId`]);
//! the same parameter may be bound more than once and its gradients accumulate.

use std::collections::BTreeMap;

use super::kernels::{gemm, MatRef};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Identifier of a trainable tensor inside a parameter store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Geometry of a 2-D convolution over NHWC input with a square kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn output_size(&self, input: usize) -> usize {
        (input + 2 * self.padding - self.kernel) / self.stride + 1
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul {
        a: usize,
        b: usize,
        ta: bool,
        tb: bool,
    },
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    AddBias(usize, usize),
    Relu(usize),
    Sum(usize),
    Mean(usize),
    Reshape(usize),
    SumRows(usize),
    ConcatCols(usize, usize),
    ConcatRows(usize, usize),
    DropDiagonal(usize),
    NormalizeRows {
        x: usize,
        norms: Vec<f64>,
    },
    StandardizeCols {
        x: usize,
        stds: Vec<f64>,
    },
    CrossEntropy {
        logits: usize,
        probs: Vec<f64>,
        targets: Vec<usize>,
    },
    Conv2d {
        x: usize,
        w: usize,
        b: usize,
        geom: ConvGeometry,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Recorded computation. Single-threaded by construction (`&mut self` on every op).
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradient per bound parameter.
pub type Gradients = BTreeMap<ParamId, Tensor>;

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// Constant leaf: no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf bound to `id`.
    pub fn param(&mut self, id: ParamId, value: Tensor) -> Var {
        let v = self.push(value, Op::Leaf, true);
        self.nodes[v.0].param = Some(id);
        v
    }

    /// Stop-gradient: a constant copy of `x`'s current value.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.clone();
        self.constant(value)
    }

    fn dims2(&self, v: usize, what: &str) -> Result<(usize, usize)> {
        self.nodes[v].value.dims2().map_err(|_| {
            Error::Shape(format!(
                "{what}: expected matrix, got {:?}",
                self.nodes[v].value.shape()
            ))
        })
    }

    /// `op(a) · op(b)` where `op` optionally transposes.
    pub fn matmul_ext(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var> {
        let (ar, ac) = self.dims2(a.0, "matmul lhs")?;
        let (br, bc) = self.dims2(b.0, "matmul rhs")?;
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul inner dims {k} vs {k2} (lhs {:?}{}, rhs {:?}{})",
                self.nodes[a.0].value.shape(),
                if ta { "ᵀ" } else { "" },
                self.nodes[b.0].value.shape(),
                if tb { "ᵀ" } else { "" },
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            MatRef::new(self.nodes[a.0].value.data(), m, k, ta),
            MatRef::new(self.nodes[b.0].value.data(), k, n, tb),
            &mut out,
            0.0,
        );
        let value = Tensor::from_op(vec![m, n], out, "matmul")?;
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(value, Op::MatMul { a: a.0, b: b.0, ta, tb }, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_ext(a, false, b, false)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let value = self.nodes[x.0].value.transpose()?;
        let rg = self.rg(&[x.0]);
        Ok(self.push(value, Op::Transpose(x.0), rg))
    }

    fn same_shape(&self, a: usize, b: usize, what: &str) -> Result<()> {
        if self.nodes[a].value.shape() != self.nodes[b].value.shape() {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.nodes[a].value.shape(),
                self.nodes[b].value.shape()
            )));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, what: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.same_shape(a.0, b.0, what)?;
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::from_op(va.shape().to_vec(), data, what)?;
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a.0, b.0))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let value = self.nodes[x.0].value.map(|v| v * c)?;
        let rg = self.rg(&[x.0]);
        Ok(self.push(value, Op::Scale(x.0, c), rg))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var> {
        let value = self.nodes[x.0].value.map(|v| v + c)?;
        let rg = self.rg(&[x.0]);
        Ok(self.push(value, Op::AddScalar(x.0), rg))
    }

    /// Adds a row vector `b[cols]` to every row of `x[rows × cols]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (r, c) = self.dims2(x.0, "add_bias")?;
        let bv = &self.nodes[b.0].value;
        if bv.shape() != [c] {
            return Err(Error::Shape(format!("bias {:?} for {r}x{c} input", bv.shape())));
        }
        let bias = bv.data();
        let mut data = self.nodes[x.0].value.data().to_vec();
        for row in data.chunks_mut(c) {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
        let value = Tensor::from_op(vec![r, c], data, "add_bias")?;
        let rg = self.rg(&[x.0, b.0]);
        Ok(self.push(value, Op::AddBias(x.0, b.0), rg))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.nodes[x.0].value.map(|v| v.max(0.0))?;
        let rg = self.rg(&[x.0]);
        Ok(self.push(value, Op::Relu(x.0), rg))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.nodes[x.0].value.data().iter().sum();
        let value = Tensor::from_op(vec![], vec![s], "sum")?;
        let rg = self.rg(&[x.0]);
        Ok(self.push(value, Op::Sum(x.0), rg))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let s: f64 = t.data().iter().sum::<f64>() / t.len() as f64;
        let value = Tensor::from_op(vec![], vec![s], "mean")?;
        let rg = self.rg(&[x.0]);
        Ok(self.push(value, Op::Mean(x.0), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.nodes[x.0].value.reshape(shape)?;
        let rg = self.rg(&[x.0]);
        Ok(self.push(value, Op::Reshape(x.0), rg))
    }

    /// Row sums: `rows × cols → rows × 1`.
    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims2(x.0, "sum_rows")?;
        let data = self.nodes[x.0]
            .value
            .data()
            .chunks(c)
            .map(|row| row.iter().sum())
            .collect();
        let value = Tensor::from_op(vec![r, 1], data, "sum_rows")?;
        let rg = self.rg(&[x.0]);
        Ok(self.push(value, Op::SumRows(x.0), rg))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.dims2(a.0, "concat_cols")?;
        let (rb, cb) = self.dims2(b.0, "concat_cols")?;
        if ra != rb {
            return Err(Error::Shape(format!("concat_cols rows {ra} vs {rb}")));
        }
        let (da, db) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
        let mut data = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            data.extend_from_slice(&da[i * ca..(i + 1) * ca]);
            data.extend_from_slice(&db[i * cb..(i + 1) * cb]);
        }
        let value = Tensor::from_op(vec![ra, ca + cb], data, "concat_cols")?;
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(value, Op::ConcatCols(a.0, b.0), rg))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.dims2(a.0, "concat_rows")?;
        let (rb, cb) = self.dims2(b.0, "concat_rows")?;
        if ca != cb {
            return Err(Error::Shape(format!("concat_rows cols {ca} vs {cb}")));
        }
        let mut data = self.nodes[a.0].value.data().to_vec();
        data.extend_from_slice(self.nodes[b.0].value.data());
        let value = Tensor::from_op(vec![ra + rb, ca], data, "concat_rows")?;
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(value, Op::ConcatRows(a.0, b.0), rg))
    }

    /// Square `n × n` → `n × (n−1)`, removing each row's diagonal entry.
    pub fn drop_diagonal(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims2(x.0, "drop_diagonal")?;
        if r != c || r < 2 {
            return Err(Error::Shape(format!("drop_diagonal needs square n>=2, got {r}x{c}")));
        }
        let d = self.nodes[x.0].value.data();
        let mut data = Vec::with_capacity(r * (r - 1));
        for i in 0..r {
            for j in 0..r {
                if i != j {
                    data.push(d[i * r + j]);
                }
            }
        }
        let value = Tensor::from_op(vec![r, r - 1], data, "drop_diagonal")?;
        let rg = self.rg(&[x.0]);
        Ok(self.push(value, Op::DropDiagonal(x.0), rg))
    }

    /// Scales every row to unit L2 norm. A zero row is an error.
    pub fn normalize_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims2(x.0, "normalize_rows")?;
        let d = self.nodes[x.0].value.data();
        let mut norms = Vec::with_capacity(r);
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in d.chunks(c).enumerate() {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n == 0.0 || !n.is_finite() {
                return Err(Error::Degenerate(format!("zero-norm embedding in row {i}")));
            }
            norms.push(n);
            data.extend(row.iter().map(|v| v / n));
        }
        let value = Tensor::from_op(vec![r, c], data, "normalize_rows")?;
        let rg = self.rg(&[x.0]);
        Ok(self.push(value, Op::NormalizeRows { x: x.0, norms }, rg))
    }

    /// Per-column standardization over the batch (rows): zero mean, unit population
    /// standard deviation, `σ = sqrt(var + eps)`. With `eps == 0` a column whose
    /// spread is negligible relative to its magnitude is a degenerate-batch error.
    pub fn standardize_cols(&mut self, x: Var, eps: f64) -> Result<Var> {
        let (r, c) = self.dims2(x.0, "standardize_cols")?;
        if r < 2 {
            return Err(Error::Shape("standardize_cols needs at least 2 rows".into()));
        }
        let d = self.nodes[x.0].value.data();
        let mut stds = Vec::with_capacity(c);
        let mut out = vec![0.0; r * c];
        for j in 0..c {
            let mean = (0..r).map(|i| d[i * c + j]).sum::<f64>() / r as f64;
            let var = (0..r).map(|i| (d[i * c + j] - mean).powi(2)).sum::<f64>() / r as f64;
            let scale = (0..r).map(|i| d[i * c + j].abs()).fold(0.0, f64::max);
            if eps == 0.0 && (var == 0.0 || var.sqrt() <= 1e-12 * scale) {
                return Err(Error::Degenerate(format!("zero-variance dimension {j}")));
            }
            let std = (var + eps).sqrt();
            stds.push(std);
            for i in 0..r {
                out[i * c + j] = (d[i * c + j] - mean) / std;
            }
        }
        let value = Tensor::from_op(vec![r, c], out, "standardize_cols")?;
        let rg = self.rg(&[x.0]);
        Ok(self.push(value, Op::StandardizeCols { x: x.0, stds }, rg))
    }

    /// Mean softmax cross-entropy of `logits[n × c]` against class `targets`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (r, c) = self.dims2(logits.0, "cross_entropy")?;
        if targets.len() != r {
            return Err(Error::Shape(format!("{} targets for {r} rows", targets.len())));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::Shape(format!("target {t} out of range for {c} classes")));
        }
        let d = self.nodes[logits.0].value.data();
        let mut probs = Vec::with_capacity(r * c);
        let mut total = 0.0;
        for (row, &t) in d.chunks(c).zip(targets) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
            let lse = m + z.ln();
            total += lse - row[t];
            probs.extend(row.iter().map(|v| (v - lse).exp()));
        }
        let value = Tensor::from_op(vec![], vec![total / r as f64], "cross_entropy")?;
        let rg = self.rg(&[logits.0]);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits: logits.0,
                probs,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Convolution over NHWC input `x[b, h, w, cin]` with weight `[k, k, cin, cout]`
    /// and bias `[cout]`; zero padding.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, geom: ConvGeometry) -> Result<Var> {
        let xs = self.nodes[x.0].value.shape().to_vec();
        let ws = self.nodes[w.0].value.shape().to_vec();
        let bs = self.nodes[b.0].value.shape().to_vec();
        let [batch, h, wd, cin] = xs[..] else {
            return Err(Error::Shape(format!("conv2d input must be NHWC, got {xs:?}")));
        };
        if ws != [geom.kernel, geom.kernel, cin, ws.get(3).copied().unwrap_or(0)] || ws.len() != 4 {
            return Err(Error::Shape(format!("conv2d weight {ws:?} for input {xs:?}")));
        }
        let cout = ws[3];
        if bs != [cout] {
            return Err(Error::Shape(format!("conv2d bias {bs:?} for {cout} outputs")));
        }
        if h + 2 * geom.padding < geom.kernel || wd + 2 * geom.padding < geom.kernel {
            return Err(Error::Shape("conv2d kernel larger than padded input".into()));
        }
        let (ho, wo) = (geom.output_size(h), geom.output_size(wd));
        let cols = im2col(self.nodes[x.0].value.data(), batch, h, wd, cin, geom);
        let kdim = geom.kernel * geom.kernel * cin;
        let rows = batch * ho * wo;
        let mut out = vec![0.0; rows * cout];
        let bias = self.nodes[b.0].value.data();
        for row in out.chunks_mut(cout) {
            row.copy_from_slice(bias);
        }
        gemm(
            MatRef::new(&cols, rows, kdim, false),
            MatRef::new(self.nodes[w.0].value.data(), kdim, cout, false),
            &mut out,
            1.0,
        );
        let value = Tensor::from_op(vec![batch, ho, wo, cout], out, "conv2d")?;
        let rg = self.rg(&[x.0, w.0, b.0]);
        Ok(self.push(
            value,
            Op::Conv2d {
                x: x.0,
                w: w.0,
                b: b.0,
                geom,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`. Every bound parameter gets an entry; those
    /// not on any path to `loss` get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = &self.nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }

        let mut out = Gradients::new();
        for (i, node) in self.nodes.iter().enumerate() {
            let Some(id) = node.param else { continue };
            let entry = out.entry(id).or_insert_with(|| Tensor::zeros(node.value.shape()));
            if let Some(Some(g)) = grads.get(i) {
                for (a, b) in entry.data_mut().iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
        for g in out.values() {
            if g.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("backward"));
            }
        }
        Ok(out)
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let mut acc = |target: usize, delta: Vec<f64>| {
            if !self.nodes[target].requires_grad {
                return;
            }
            match &mut grads[target] {
                Some(existing) => existing.iter_mut().zip(&delta).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, ta, tb } => {
                let (m, n) = (node.value.rows(), node.value.cols());
                let av = &self.nodes[a].value;
                let bv = &self.nodes[b].value;
                let k = if ta { av.rows() } else { av.cols() };
                let gm = MatRef::new(g, m, n, false);
                let aop = MatRef::new(av.data(), m, k, ta);
                let bop = MatRef::new(bv.data(), k, n, tb);
                if self.nodes[a].requires_grad {
                    let mut ga = vec![0.0; m * k];
                    if ta {
                        // stored A is k×m: dA = op(B) · Gᵀ
                        gemm(bop, gm.t(), &mut ga, 0.0);
                    } else {
                        gemm(gm, bop.t(), &mut ga, 0.0);
                    }
                    acc(a, ga);
                }
                if self.nodes[b].requires_grad {
                    let mut gb = vec![0.0; k * n];
                    if tb {
                        // stored B is n×k: dB = Gᵀ · op(A)
                        gemm(gm.t(), aop, &mut gb, 0.0);
                    } else {
                        gemm(aop.t(), gm, &mut gb, 0.0);
                    }
                    acc(b, gb);
                }
            }
            &Op::Transpose(x) => {
                let (r, c) = (node.value.rows(), node.value.cols());
                let mut gx = vec![0.0; r * c];
                for p in 0..r {
                    for q in 0..c {
                        gx[q * r + p] = g[p * c + q];
                    }
                }
                acc(x, gx);
            }
            &Op::Add(a, b) => {
                acc(a, g.to_vec());
                acc(b, g.to_vec());
            }
            &Op::Sub(a, b) => {
                acc(a, g.to_vec());
                acc(b, g.iter().map(|v| -v).collect());
            }
            &Op::Mul(a, b) => {
                let (av, bv) = (self.nodes[a].value.data(), self.nodes[b].value.data());
                acc(a, g.iter().zip(bv).map(|(g, y)| g * y).collect());
                acc(b, g.iter().zip(av).map(|(g, x)| g * x).collect());
            }
            &Op::Scale(x, c) => acc(x, g.iter().map(|v| v * c).collect()),
            &Op::AddScalar(x) | &Op::Reshape(x) => acc(x, g.to_vec()),
            &Op::AddBias(x, b) => {
                let c = node.value.cols();
                let mut gb = vec![0.0; c];
                for row in g.chunks(c) {
                    gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                acc(x, g.to_vec());
                acc(b, gb);
            }
            &Op::Relu(x) => {
                let xv = self.nodes[x].value.data();
                acc(
                    x,
                    g.iter().zip(xv).map(|(g, v)| if *v > 0.0 { *g } else { 0.0 }).collect(),
                );
            }
            &Op::Sum(x) => acc(x, vec![g[0]; self.nodes[x].value.len()]),
            &Op::Mean(x) => {
                let n = self.nodes[x].value.len();
                acc(x, vec![g[0] / n as f64; n]);
            }
            &Op::SumRows(x) => {
                let (r, c) = (self.nodes[x].value.rows(), self.nodes[x].value.cols());
                let mut gx = Vec::with_capacity(r * c);
                for gi in g {
                    gx.extend(std::iter::repeat_n(*gi, c));
                }
                acc(x, gx);
            }
            &Op::ConcatCols(a, b) => {
                let ca = self.nodes[a].value.cols();
                let cb = self.nodes[b].value.cols();
                let mut ga = Vec::new();
                let mut gb = Vec::new();
                for row in g.chunks(ca + cb) {
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                acc(a, ga);
                acc(b, gb);
            }
            &Op::ConcatRows(a, b) => {
                let na = self.nodes[a].value.len();
                acc(a, g[..na].to_vec());
                acc(b, g[na..].to_vec());
            }
            &Op::DropDiagonal(x) => {
                let r = node.value.rows();
                let mut gx = vec![0.0; r * r];
                let mut k = 0;
                for i in 0..r {
                    for j in 0..r {
                        if i != j {
                            gx[i * r + j] = g[k];
                            k += 1;
                        }
                    }
                }
                acc(x, gx);
            }
            Op::NormalizeRows { x, norms } => {
                let c = node.value.cols();
                let y = node.value.data();
                let mut gx = Vec::with_capacity(y.len());
                for ((yr, gr), n) in y.chunks(c).zip(g.chunks(c)).zip(norms) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    gx.extend(yr.iter().zip(gr).map(|(y, g)| (g - y * dot) / n));
                }
                acc(*x, gx);
            }
            Op::StandardizeCols { x, stds } => {
                let (r, c) = (node.value.rows(), node.value.cols());
                let y = node.value.data();
                let mut gx = vec![0.0; r * c];
                for j in 0..c {
                    let mg = (0..r).map(|i| g[i * c + j]).sum::<f64>() / r as f64;
                    let mgy = (0..r).map(|i| g[i * c + j] * y[i * c + j]).sum::<f64>() / r as f64;
                    for i in 0..r {
                        gx[i * c + j] = (g[i * c + j] - mg - y[i * c + j] * mgy) / stds[j];
                    }
                }
                acc(*x, gx);
            }
            Op::CrossEntropy { logits, probs, targets } => {
                let c = self.nodes[*logits].value.cols();
                let n = targets.len() as f64;
                let mut gx = probs.clone();
                for (row, &t) in gx.chunks_mut(c).zip(targets) {
                    row[t] -= 1.0;
                    row.iter_mut().for_each(|v| *v *= g[0] / n);
                }
                acc(*logits, gx);
            }
            &Op::Conv2d { x, w, b, geom } => {
                let xs = self.nodes[x].value.shape();
                let (batch, h, wd, cin) = (xs[0], xs[1], xs[2], xs[3]);
                let cout = node.value.shape()[3];
                let rows = g.len() / cout;
                let kdim = geom.kernel * geom.kernel * cin;
                let gm = MatRef::new(g, rows, cout, false);
                if self.nodes[b].requires_grad {
                    let mut gb = vec![0.0; cout];
                    for row in g.chunks(cout) {
                        gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                    acc(b, gb);
                }
                if self.nodes[w].requires_grad {
                    let cols = im2col(self.nodes[x].value.data(), batch, h, wd, cin, geom);
                    let mut gw = vec![0.0; kdim * cout];
                    gemm(MatRef::new(&cols, rows, kdim, false).t(), gm, &mut gw, 0.0);
                    acc(w, gw);
                }
                if self.nodes[x].requires_grad {
                    let mut gcols = vec![0.0; rows * kdim];
                    gemm(
                        gm,
                        MatRef::new(self.nodes[w].value.data(), kdim, cout, false).t(),
                        &mut gcols,
                        0.0,
                    );
                    acc(x, col2im(&gcols, batch, h, wd, cin, geom));
                }
            }
        }
    }
}

fn im2col(x: &[f64], batch: usize, h: usize, w: usize, cin: usize, geom: ConvGeometry) -> Vec<f64> {
    let (ho, wo) = (geom.output_size(h), geom.output_size(w));
    let k = geom.kernel;
    let kdim = k * k * cin;
    let mut cols = vec![0.0; batch * ho * wo * kdim];
    let mut r = 0;
    for bi in 0..batch {
        let img = &x[bi * h * w * cin..(bi + 1) * h * w * cin];
        for oy in 0..ho {
            for ox in 0..wo {
                let dst = &mut cols[r * kdim..(r + 1) * kdim];
                for ky in 0..k {
                    let iy = (oy * geom.stride + ky) as isize - geom.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * geom.stride + kx) as isize - geom.padding as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let src = (iy as usize * w + ix as usize) * cin;
                        let d = (ky * k + kx) * cin;
                        dst[d..d + cin].copy_from_slice(&img[src..src + cin]);
                    }
                }
                r += 1;
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], batch: usize, h: usize, w: usize, cin: usize, geom: ConvGeometry) -> Vec<f64> {
    let (ho, wo) = (geom.output_size(h), geom.output_size(w));
    let k = geom.kernel;
    let kdim = k * k * cin;
    let mut x = vec![0.0; batch * h * w * cin];
    let mut r = 0;
    for bi in 0..batch {
        let img = &mut x[bi * h * w * cin..(bi + 1) * h * w * cin];
        for oy in 0..ho {
            for ox in 0..wo {
                let src = &cols[r * kdim..(r + 1) * kdim];
                for ky in 0..k {
                    let iy = (oy * geom.stride + ky) as isize - geom.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * geom.stride + kx) as isize - geom.padding as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let dst = (iy as usize * w + ix as usize) * cin;
                        let s = (ky * k + kx) * cin;
                        for c in 0..cin {
                            img[dst + c] += src[s + c];
                        }
                    }
                }
                r += 1;
            }
        }
    }
    x
}
