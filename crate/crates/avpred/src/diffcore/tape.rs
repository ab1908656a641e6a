//! Append-only operation tape with reverse-mode adjoints.
//!
//! Every operation records its parents and enough saved state to compute
//! exact adjoints. `backward` walks nodes in reverse creation order and
//! accumulates gradients additively at fan-out.

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulScalar(NodeId, NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId),
    MulMask(NodeId, Tensor),
    Matmul(NodeId, NodeId),
    MatVec(NodeId, NodeId),
    VecMat(NodeId, NodeId),
    Dot(NodeId, NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    PowConst(NodeId, f64),
    ClampMin(NodeId, f64),
    Softmax(NodeId),
    LogSumExp(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    ConcatVec(NodeId, NodeId),
    Row(NodeId, usize),
    StackRows(Vec<NodeId>),
    MaxElem(NodeId, NodeId),
    Conv1d { x: NodeId, w: NodeId, b: NodeId },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients keyed by node, produced by [`Tape::backward`].
pub struct Grads {
    by_node: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.by_node.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.by_node.get_mut(id.0).and_then(|g| g.take())
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        debug_assert!(value.is_finite(), "non-finite value produced by {op:?}");
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Insert a tensor as a differentiable leaf (parameter or input).
    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Leaf)
    }

    // ── elementwise ───────────────────────────────────────────────

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
            let t = Tensor::new(ta.shape().to_vec(), data)?;
            return Ok(self.push(t, Op::Add(a, b)));
        }
        // [m,n] + [n]: broadcast the vector across rows.
        if ta.shape().len() == 2 && tb.shape().len() == 1 && ta.cols() == tb.numel() {
            let cols = ta.cols();
            let data = ta
                .data()
                .iter()
                .enumerate()
                .map(|(i, x)| x + tb.data()[i % cols])
                .collect();
            let t = Tensor::new(ta.shape().to_vec(), data)?;
            return Ok(self.push(t, Op::AddRow(a, b)));
        }
        Err(Error::Shape(format!("add: {:?} vs {:?}", ta.shape(), tb.shape())))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape(format!("sub: {:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x - y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
            let t = Tensor::new(ta.shape().to_vec(), data)?;
            return Ok(self.push(t, Op::Mul(a, b)));
        }
        if tb.is_scalar() {
            let s = tb.item();
            let t = ta.map(|x| x * s);
            return Ok(self.push(t, Op::MulScalar(a, b)));
        }
        if ta.is_scalar() {
            return self.mul(b, a);
        }
        Err(Error::Shape(format!("mul: {:?} vs {:?}", ta.shape(), tb.shape())))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let t = self.value(a).map(|x| x * c);
        self.push(t, Op::Scale(a, c))
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let t = self.value(a).map(|x| x + c);
        self.push(t, Op::AddConst(a))
    }

    /// Elementwise product with a constant tensor (dropout masks).
    pub fn mul_mask(&mut self, a: NodeId, mask: Tensor) -> Result<NodeId> {
        let ta = self.value(a);
        if ta.shape() != mask.shape() {
            return Err(Error::Shape(format!(
                "mul_mask: {:?} vs {:?}",
                ta.shape(),
                mask.shape()
            )));
        }
        let data = ta.data().iter().zip(mask.data()).map(|(x, m)| x * m).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(t, Op::MulMask(a, mask)))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a).map(|x| x.max(0.0));
        self.push(t, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a).map(sigmoid);
        self.push(t, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a).map(f64::tanh);
        self.push(t, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a).map(f64::exp);
        self.push(t, Op::Exp(a))
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a).map(f64::ln);
        self.push(t, Op::Ln(a))
    }

    pub fn pow_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let t = self.value(a).map(|x| x.powf(c));
        self.push(t, Op::PowConst(a, c))
    }

    /// max(x, c) elementwise; the subgradient below the clamp is 0.
    pub fn clamp_min(&mut self, a: NodeId, c: f64) -> NodeId {
        let t = self.value(a).map(|x| x.max(c));
        self.push(t, Op::ClampMin(a, c))
    }

    /// Elementwise maximum; ties route the gradient to the first argument.
    pub fn max_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape(format!("max: {:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x.max(*y)).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(t, Op::MaxElem(a, b)))
    }

    // ── linear algebra ────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(Error::Shape(format!("matmul: {:?} x {:?}", ta.shape(), tb.shape())));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = ta.row(i);
            for (kk, &av) in arow.iter().enumerate().take(k) {
                if av == 0.0 {
                    continue;
                }
                let brow = tb.row(kk);
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += av * brow[j];
                }
            }
        }
        let t = Tensor::matrix(m, n, out)?;
        Ok(self.push(t, Op::Matmul(a, b)))
    }

    /// Matrix-vector product `[m,k] x [k] -> [m]`.
    pub fn matvec(&mut self, a: NodeId, v: NodeId) -> Result<NodeId> {
        let (ta, tv) = (self.value(a), self.value(v));
        if ta.shape().len() != 2 || tv.shape().len() != 1 || ta.cols() != tv.numel() {
            return Err(Error::Shape(format!("matvec: {:?} x {:?}", ta.shape(), tv.shape())));
        }
        let out: Vec<f64> =
            (0..ta.rows()).map(|i| dot(ta.row(i), tv.data())).collect();
        Ok(self.push(Tensor::vector(out), Op::MatVec(a, v)))
    }

    /// Vector-matrix product `[m] x [m,k] -> [k]`.
    pub fn vecmat(&mut self, v: NodeId, a: NodeId) -> Result<NodeId> {
        let (tv, ta) = (self.value(v), self.value(a));
        if ta.shape().len() != 2 || tv.shape().len() != 1 || ta.rows() != tv.numel() {
            return Err(Error::Shape(format!("vecmat: {:?} x {:?}", tv.shape(), ta.shape())));
        }
        let k = ta.cols();
        let mut out = vec![0.0; k];
        for (i, &vi) in tv.data().iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (j, &aij) in ta.row(i).iter().enumerate() {
                out[j] += vi * aij;
            }
        }
        Ok(self.push(Tensor::vector(out), Op::VecMat(v, a)))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() || ta.shape().len() != 1 {
            return Err(Error::Shape(format!("dot: {:?} . {:?}", ta.shape(), tb.shape())));
        }
        let s = dot(ta.data(), tb.data());
        Ok(self.push(Tensor::scalar(s), Op::Dot(a, b)))
    }

    // ── reductions and softmax ────────────────────────────────────

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let ta = self.value(a);
        if ta.shape().len() != 1 {
            return Err(Error::Shape(format!("softmax expects a vector, got {:?}", ta.shape())));
        }
        let max = ta.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = ta.data().iter().map(|&x| (x - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let t = Tensor::vector(exps.into_iter().map(|e| e / sum).collect());
        Ok(self.push(t, Op::Softmax(a)))
    }

    pub fn logsumexp(&mut self, a: NodeId) -> Result<NodeId> {
        let ta = self.value(a);
        if ta.shape().len() != 1 {
            return Err(Error::Shape(format!("logsumexp expects a vector, got {:?}", ta.shape())));
        }
        let max = ta.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = ta.data().iter().map(|&x| (x - max).exp()).sum();
        Ok(self.push(Tensor::scalar(max + sum.ln()), Op::LogSumExp(a)))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    // ── structure ─────────────────────────────────────────────────

    pub fn concat_vec(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 1 || tb.shape().len() != 1 {
            return Err(Error::Shape(format!("concat: {:?} ++ {:?}", ta.shape(), tb.shape())));
        }
        let mut data = ta.data().to_vec();
        data.extend_from_slice(tb.data());
        Ok(self.push(Tensor::vector(data), Op::ConcatVec(a, b)))
    }

    /// Extract row `i` of a matrix as a vector.
    pub fn row(&mut self, a: NodeId, i: usize) -> Result<NodeId> {
        let ta = self.value(a);
        if ta.shape().len() != 2 || i >= ta.rows() {
            return Err(Error::Shape(format!("row {i} of {:?}", ta.shape())));
        }
        let t = Tensor::vector(ta.row(i).to_vec());
        Ok(self.push(t, Op::Row(a, i)))
    }

    /// Stack equal-length vectors as matrix rows.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        if rows.is_empty() {
            return Err(Error::Shape("stack_rows of no rows".into()));
        }
        let cols = self.value(rows[0]).numel();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            let tr = self.value(r);
            if tr.shape().len() != 1 || tr.numel() != cols {
                return Err(Error::Shape(format!(
                    "stack_rows: row of shape {:?}, expected [{cols}]",
                    tr.shape()
                )));
            }
            data.extend_from_slice(tr.data());
        }
        let t = Tensor::matrix(rows.len(), cols, data)?;
        Ok(self.push(t, Op::StackRows(rows.to_vec())))
    }

    /// Valid (no padding) 1-D convolution: `x` is `[L, Din]`, `w` is
    /// `[K, H, Din]`, `b` is `[K]`; output `[L-H+1, K]`. Linear part only;
    /// see [`super::conv1d`] for the activation-composed form.
    pub fn conv1d_linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        if tx.shape().len() != 2 || tw.shape().len() != 3 || tb.shape().len() != 1 {
            return Err(Error::Shape(format!(
                "conv1d: x {:?}, w {:?}, b {:?}",
                tx.shape(),
                tw.shape(),
                tb.shape()
            )));
        }
        let (l, din) = (tx.rows(), tx.cols());
        let (k, h, wd) = (tw.shape()[0], tw.shape()[1], tw.shape()[2]);
        if wd != din || tb.numel() != k {
            return Err(Error::Shape(format!(
                "conv1d: input dim {din} vs kernel dim {wd}, channels {k} vs bias {}",
                tb.numel()
            )));
        }
        if l < h {
            return Err(Error::Length(format!(
                "conv1d: sequence length {l} shorter than kernel size {h}"
            )));
        }
        let lout = l - h + 1;
        let window = h * din;
        let mut out = vec![0.0; lout * k];
        for j in 0..lout {
            let xwin = &tx.data()[j * din..j * din + window];
            for kk in 0..k {
                let wk = &tw.data()[kk * window..(kk + 1) * window];
                out[j * k + kk] = dot(xwin, wk) + tb.data()[kk];
            }
        }
        let t = Tensor::matrix(lout, k, out)?;
        Ok(self.push(t, Op::Conv1d { x, w, b }))
    }

    // ── reverse pass ──────────────────────────────────────────────

    /// Exact reverse-mode adjoints for a scalar root. Gradients at fan-out
    /// accumulate additively; nodes the root does not depend on get none.
    pub fn backward(&self, root: NodeId) -> Result<Grads> {
        if !self.value(root).is_scalar() {
            return Err(Error::Shape(format!(
                "backward root must be scalar, got {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            // Re-store for callers; adjoint propagation borrows it below.
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accum(&mut grads, *a, &g);
                    accum(&mut grads, *b, &g);
                }
                Op::AddRow(a, b) => {
                    accum(&mut grads, *a, &g);
                    let cols = self.value(*b).numel();
                    let mut gb = vec![0.0; cols];
                    for (i, &gv) in g.data().iter().enumerate() {
                        gb[i % cols] += gv;
                    }
                    accum(&mut grads, *b, &Tensor::vector(gb));
                }
                Op::Sub(a, b) => {
                    accum(&mut grads, *a, &g);
                    accum(&mut grads, *b, &g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let ga = mul_elem(&g, self.value(*b));
                    let gb = mul_elem(&g, self.value(*a));
                    accum(&mut grads, *a, &ga);
                    accum(&mut grads, *b, &gb);
                }
                Op::MulScalar(a, s) => {
                    let sv = self.value(*s).item();
                    accum(&mut grads, *a, &g.map(|x| x * sv));
                    let gs = dot(g.data(), self.value(*a).data());
                    accum(&mut grads, *s, &Tensor::scalar(gs));
                }
                Op::Scale(a, c) => accum(&mut grads, *a, &g.map(|x| x * c)),
                Op::AddConst(a) => accum(&mut grads, *a, &g),
                Op::MulMask(a, mask) => {
                    let ga = mul_elem(&g, mask);
                    accum(&mut grads, *a, &ga);
                }
                Op::Matmul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    let mut ga = vec![0.0; m * k];
                    let mut gb = vec![0.0; k * n];
                    for i in 0..m {
                        let grow = &g.data()[i * n..(i + 1) * n];
                        for kk in 0..k {
                            ga[i * k + kk] += dot(grow, tb.row(kk));
                            let av = ta.row(i)[kk];
                            if av != 0.0 {
                                for j in 0..n {
                                    gb[kk * n + j] += av * grow[j];
                                }
                            }
                        }
                    }
                    accum(&mut grads, *a, &Tensor::matrix(m, k, ga).expect("shape"));
                    accum(&mut grads, *b, &Tensor::matrix(k, n, gb).expect("shape"));
                }
                Op::MatVec(a, v) => {
                    let (ta, tv) = (self.value(*a), self.value(*v));
                    let (m, k) = (ta.rows(), ta.cols());
                    let mut ga = vec![0.0; m * k];
                    let mut gv = vec![0.0; k];
                    for i in 0..m {
                        let gi = g.data()[i];
                        if gi == 0.0 {
                            continue;
                        }
                        for j in 0..k {
                            ga[i * k + j] += gi * tv.data()[j];
                            gv[j] += gi * ta.row(i)[j];
                        }
                    }
                    accum(&mut grads, *a, &Tensor::matrix(m, k, ga).expect("shape"));
                    accum(&mut grads, *v, &Tensor::vector(gv));
                }
                Op::VecMat(v, a) => {
                    let (tv, ta) = (self.value(*v), self.value(*a));
                    let (m, k) = (ta.rows(), ta.cols());
                    let mut gv = vec![0.0; m];
                    let mut ga = vec![0.0; m * k];
                    for i in 0..m {
                        gv[i] = dot(g.data(), ta.row(i));
                        let vi = tv.data()[i];
                        if vi != 0.0 {
                            for j in 0..k {
                                ga[i * k + j] += vi * g.data()[j];
                            }
                        }
                    }
                    accum(&mut grads, *v, &Tensor::vector(gv));
                    accum(&mut grads, *a, &Tensor::matrix(m, k, ga).expect("shape"));
                }
                Op::Dot(a, b) => {
                    let gs = g.item();
                    accum(&mut grads, *a, &self.value(*b).map(|x| x * gs));
                    accum(&mut grads, *b, &self.value(*a).map(|x| x * gs));
                }
                Op::Relu(a) => {
                    let ga = zip_map(&g, self.value(*a), |gv, x| if x > 0.0 { gv } else { 0.0 });
                    accum(&mut grads, *a, &ga);
                }
                Op::Sigmoid(a) => {
                    let ga = zip_map(&g, &node.value, |gv, y| gv * y * (1.0 - y));
                    accum(&mut grads, *a, &ga);
                }
                Op::Tanh(a) => {
                    let ga = zip_map(&g, &node.value, |gv, y| gv * (1.0 - y * y));
                    accum(&mut grads, *a, &ga);
                }
                Op::Exp(a) => {
                    let ga = zip_map(&g, &node.value, |gv, y| gv * y);
                    accum(&mut grads, *a, &ga);
                }
                Op::Ln(a) => {
                    let ga = zip_map(&g, self.value(*a), |gv, x| gv / x);
                    accum(&mut grads, *a, &ga);
                }
                Op::PowConst(a, c) => {
                    let ga = zip_map(&g, self.value(*a), |gv, x| gv * c * x.powf(c - 1.0));
                    accum(&mut grads, *a, &ga);
                }
                Op::ClampMin(a, c) => {
                    let ga = zip_map(&g, self.value(*a), |gv, x| if x > *c { gv } else { 0.0 });
                    accum(&mut grads, *a, &ga);
                }
                Op::Softmax(a) => {
                    let s = node.value.data();
                    let gs = dot(g.data(), s);
                    let ga: Vec<f64> =
                        g.data().iter().zip(s).map(|(gv, sv)| sv * (gv - gs)).collect();
                    accum(&mut grads, *a, &Tensor::vector(ga));
                }
                Op::LogSumExp(a) => {
                    let ta = self.value(*a);
                    let max = ta.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = ta.data().iter().map(|&x| (x - max).exp()).collect();
                    let sum: f64 = exps.iter().sum();
                    let gs = g.item();
                    let ga: Vec<f64> = exps.iter().map(|e| gs * e / sum).collect();
                    accum(&mut grads, *a, &Tensor::vector(ga));
                }
                Op::Sum(a) => {
                    let gs = g.item();
                    let ta = self.value(*a);
                    accum(&mut grads, *a, &ta.map(|_| gs));
                }
                Op::Mean(a) => {
                    let ta = self.value(*a);
                    let gs = g.item() / ta.numel() as f64;
                    accum(&mut grads, *a, &ta.map(|_| gs));
                }
                Op::ConcatVec(a, b) => {
                    let na = self.value(*a).numel();
                    accum(&mut grads, *a, &Tensor::vector(g.data()[..na].to_vec()));
                    accum(&mut grads, *b, &Tensor::vector(g.data()[na..].to_vec()));
                }
                Op::Row(a, i) => {
                    let ta = self.value(*a);
                    let mut ga = Tensor::zeros(ta.shape().to_vec());
                    let cols = ta.cols();
                    ga.data_mut()[i * cols..(i + 1) * cols].copy_from_slice(g.data());
                    accum(&mut grads, *a, &ga);
                }
                Op::StackRows(rows) => {
                    let cols = g.cols();
                    for (i, &r) in rows.iter().enumerate() {
                        accum(
                            &mut grads,
                            r,
                            &Tensor::vector(g.data()[i * cols..(i + 1) * cols].to_vec()),
                        );
                    }
                }
                Op::MaxElem(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let ga: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(ta.data().iter().zip(tb.data()))
                        .map(|(gv, (x, y))| if x >= y { *gv } else { 0.0 })
                        .collect();
                    let gb: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(ta.data().iter().zip(tb.data()))
                        .map(|(gv, (x, y))| if x >= y { 0.0 } else { *gv })
                        .collect();
                    accum(&mut grads, *a, &Tensor::new(ta.shape().to_vec(), ga).expect("shape"));
                    accum(&mut grads, *b, &Tensor::new(tb.shape().to_vec(), gb).expect("shape"));
                }
                Op::Conv1d { x, w, b } => {
                    let (tx, tw) = (self.value(*x), self.value(*w));
                    let (l, din) = (tx.rows(), tx.cols());
                    let (k, h) = (tw.shape()[0], tw.shape()[1]);
                    let lout = l - h + 1;
                    let window = h * din;
                    let mut gx = vec![0.0; l * din];
                    let mut gw = vec![0.0; k * window];
                    let mut gb = vec![0.0; k];
                    for j in 0..lout {
                        let xwin = &tx.data()[j * din..j * din + window];
                        for kk in 0..k {
                            let go = g.data()[j * k + kk];
                            if go == 0.0 {
                                continue;
                            }
                            gb[kk] += go;
                            let wk = &tw.data()[kk * window..(kk + 1) * window];
                            let gxwin = &mut gx[j * din..j * din + window];
                            let gwk = &mut gw[kk * window..(kk + 1) * window];
                            for t in 0..window {
                                gxwin[t] += go * wk[t];
                                gwk[t] += go * xwin[t];
                            }
                        }
                    }
                    accum(&mut grads, *x, &Tensor::matrix(l, din, gx).expect("shape"));
                    accum(
                        &mut grads,
                        *w,
                        &Tensor::new(vec![k, h, din], gw).expect("shape"),
                    );
                    accum(&mut grads, *b, &Tensor::vector(gb));
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Grads { by_node: grads })
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn mul_elem(a: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect(),
    )
    .expect("shape")
}

fn zip_map(g: &Tensor, x: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(g.shape(), x.shape());
    Tensor::new(
        g.shape().to_vec(),
        g.data().iter().zip(x.data()).map(|(&gv, &xv)| f(gv, xv)).collect(),
    )
    .expect("shape")
}

fn accum(grads: &mut [Option<Tensor>], id: NodeId, g: &Tensor) {
    let slot = &mut grads[id.0];
    match slot {
        Some(existing) => existing.add_assign(g),
        None => *slot = Some(g.clone()),
    }
}
