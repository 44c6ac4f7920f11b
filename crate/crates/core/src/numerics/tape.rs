//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive applied to its [`Var`]s. Calling
//! [`Tape::backward`] on a 1x1 result walks the record in reverse and
//! accumulates gradients into every node that (transitively) depends on a
//! leaf created with `requires_grad`.
//!
//! Model parameters live in a [`ParamStore`] outside of any tape. A fresh tape
//! is built per optimisation step; [`Tape::param`] binds a stored tensor as a
//! leaf and [`ParamStore::collect_grads`] copies the resulting gradients back.

use rand::Rng;

use super::matrix::{gemm, Matrix, Op as Gemm};
use crate::error::{Error, Result};

/// Variance floor added inside layer normalisation.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// A parameter or input value together with its gradient.
#[derive(Clone, Debug)]
pub struct Tensor {
    pub value: Matrix,
    pub grad: Option<Matrix>,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn new(value: Matrix, requires_grad: bool) -> Self {
        Self {
            value,
            grad: None,
            requires_grad,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, trainable tensors of a model.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
    names: Vec<String>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.tensors.push(Tensor::new(value, true));
        self.names.push(name.into());
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.tensors[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for t in &mut self.tensors {
            t.grad = None;
        }
    }

    /// Copies gradients of every parameter bound on `tape` into the store.
    /// Parameters the tape never saw, or that did not reach the loss, end up
    /// with `grad == None`.
    pub fn collect_grads(&mut self, tape: &Tape) {
        for (i, t) in self.tensors.iter_mut().enumerate() {
            t.grad = tape
                .bound
                .get(i)
                .copied()
                .flatten()
                .and_then(|v| tape.grad(v).cloned());
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    RowSoftmax(Var),
    ColSoftmax(Var),
    LeakyRelu(Var, f64),
    Relu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    HConcat(Vec<Var>),
    Dropout(Var, Vec<f64>),
    RowNormalize(Var, Vec<f64>),
    Sum(Var),
    RowSum(Var),
    LogClamped(Var, f64),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
    bound: Vec<Option<Var>>,
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

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.leaf(value, false)
    }

    /// Binds a stored parameter as a leaf. Binding the same id twice returns
    /// the same variable.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(Some(v)) = self.bound.get(id.0) {
            return *v;
        }
        let t = store.get(id);
        let v = self.leaf(t.value.clone(), t.requires_grad);
        if self.bound.len() <= id.0 {
            self.bound.resize(id.0 + 1, None);
        }
        self.bound[id.0] = Some(v);
        v
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of a leaf after [`Tape::backward`]. Intermediate nodes keep none.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m.as_slice()[0]
    }

    /// Forgets accumulated gradients, keeping the recorded graph.
    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    // ---- primitives -------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(Error::shape("matmul", sa, sb));
        }
        let mut out = Matrix::zeros(sa.0, sb.1);
        gemm(Gemm::N, Gemm::N, 1.0, self.value(a), self.value(b), 0.0, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(out, Op::Transpose(a), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape("add", sa, sb));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// Elementwise product.
    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape("hadamard", sa, sb));
        }
        let data = self
            .value(a)
            .as_slice()
            .iter()
            .zip(self.value(b).as_slice())
            .map(|(x, y)| x * y)
            .collect();
        let out = Matrix::from_vec(sa.0, sa.1, data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Hadamard(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).scale(c);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, c), rg)
    }

    /// Softmax across each row.
    pub fn row_softmax(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        let cols = out.cols();
        if cols > 0 {
            for row in out.as_mut_slice().chunks_mut(cols) {
                softmax_in_place(row);
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::RowSoftmax(a), rg)
    }

    /// Softmax down each column.
    pub fn col_softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let (rows, cols) = x.shape();
        let mut out = x.clone();
        let mut maxes = vec![f64::NEG_INFINITY; cols];
        for i in 0..rows {
            for (m, &v) in maxes.iter_mut().zip(x.row(i)) {
                *m = m.max(v);
            }
        }
        let mut sums = vec![0.0; cols];
        for i in 0..rows {
            for ((o, s), m) in out.row_mut(i).iter_mut().zip(&mut sums).zip(&maxes) {
                *o = (*o - m).exp();
                *s += *o;
            }
        }
        for i in 0..rows {
            for (o, s) in out.row_mut(i).iter_mut().zip(&sums) {
                *o /= s;
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::ColSoftmax(a), rg)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.value(a).map(|v| if v > 0.0 { v } else { slope * v });
        let rg = self.rg(a);
        self.push(out, Op::LeakyRelu(a, slope), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    /// Row-wise layer normalisation with a learnable `1 x cols` scale and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if cols == 0 {
            return Err(Error::InvalidArgument("layer_norm on empty rows".into()));
        }
        if self.shape(gamma) != (1, cols) {
            return Err(Error::shape("layer_norm(gamma)", (rows, cols), self.shape(gamma)));
        }
        if self.shape(beta) != (1, cols) {
            return Err(Error::shape("layer_norm(beta)", (rows, cols), self.shape(beta)));
        }
        let xv = self.value(x);
        let g = self.value(gamma).as_slice();
        let b = self.value(beta).as_slice();
        let mut xhat = Matrix::zeros(rows, cols);
        let mut out = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for i in 0..rows {
            let r = xv.row(i);
            let mean = r.iter().sum::<f64>() / cols as f64;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(is);
            let xh = xhat.row_mut(i);
            for (h, v) in xh.iter_mut().zip(r) {
                *h = (v - mean) * is;
            }
            let xh = xhat.row(i).to_vec();
            for (((o, h), gg), bb) in out.row_mut(i).iter_mut().zip(&xh).zip(g).zip(b) {
                *o = h * gg + bb;
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Horizontal concatenation of equally tall blocks.
    pub fn hconcat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("hconcat of nothing".into()))?;
        let rows = self.shape(*first).0;
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.0 != rows {
                return Err(Error::shape("hconcat", self.shape(*first), s));
            }
            cols += s.1;
        }
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.nodes[p.0].value.row(i);
                out.row_mut(i)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::HConcat(parts.to_vec()), rg))
    }

    /// Inverted dropout: kept entries are scaled by `1 / (1 - rate)` so the
    /// expectation matches evaluation mode, which skips this op entirely.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate} not in [0, 1)")));
        }
        if rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.value(a).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let x = self.value(a);
        let data = x.as_slice().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Matrix::from_vec(x.rows(), x.cols(), data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Dropout(a, mask), rg))
    }

    /// Scales each row to unit Euclidean norm. All-zero rows stay zero.
    pub fn row_normalize(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = x.clone();
        let mut norms = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let n = x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            norms.push(n);
            let r = out.row_mut(i);
            if n > 0.0 {
                r.iter_mut().for_each(|v| *v /= n);
            } else {
                r.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::RowNormalize(a, norms), rg)
    }

    /// Pairwise cosine similarities between the rows of `a` and the rows of `b`.
    /// Similarity with an all-zero row is defined as 0.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.1 {
            return Err(Error::shape("cosine_similarity", sa, sb));
        }
        let an = self.row_normalize(a);
        let bn = if a == b { an } else { self.row_normalize(b) };
        let bt = self.transpose(bn);
        self.matmul(an, bt)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        self.push(Matrix::filled(1, 1, s), Op::Sum(a), rg)
    }

    /// Column vector of row sums.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data: Vec<f64> = (0..x.rows()).map(|i| x.row(i).iter().sum()).collect();
        let out = Matrix::from_vec(x.rows(), 1, data).expect("row_sum shape");
        let rg = self.rg(a);
        self.push(out, Op::RowSum(a), rg)
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn log_clamped(&mut self, a: Var, floor: f64) -> Var {
        let out = self.value(a).map(|v| v.max(floor).ln());
        let rg = self.rg(a);
        self.push(out, Op::LogClamped(a, floor), rg)
    }

    // ---- reverse pass -----------------------------------------------------

    /// Back-propagates from a 1x1 `loss`.
    ///
    /// Leaf gradients accumulate: calling this twice without [`Tape::zero_grad`]
    /// doubles every stored gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::NonScalarLoss(shape));
        }
        if !self.rg(loss) {
            return Ok(());
        }
        let mut local: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        local[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = local[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut local);
            if !matches!(self.nodes[idx].op, Op::Leaf) {
                continue;
            }
            match &mut self.grads[idx] {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &Matrix, local: &mut [Option<Matrix>]) {
        let node = &self.nodes[idx];
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    let va = self.value(*a);
                    let acc = slot(local, *a, va.shape());
                    gemm(Gemm::N, Gemm::T, 1.0, g, self.value(*b), 1.0, acc);
                }
                if self.rg(*b) {
                    let vb = self.value(*b);
                    let acc = slot(local, *b, vb.shape());
                    gemm(Gemm::T, Gemm::N, 1.0, self.value(*a), g, 1.0, acc);
                }
            }
            Op::Transpose(a) => {
                if self.rg(*a) {
                    let t = g.transpose();
                    accumulate(local, *a, t);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.rg(v) {
                        accumulate(local, v, g.clone());
                    }
                }
            }
            Op::Hadamard(a, b) => {
                if self.rg(*a) {
                    let d = zip_map(g, self.value(*b), |x, y| x * y);
                    accumulate(local, *a, d);
                }
                if self.rg(*b) {
                    let d = zip_map(g, self.value(*a), |x, y| x * y);
                    accumulate(local, *b, d);
                }
            }
            Op::Scale(a, c) => {
                if self.rg(*a) {
                    accumulate(local, *a, g.scale(*c));
                }
            }
            Op::RowSoftmax(a) => {
                if self.rg(*a) {
                    let mut d = Matrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let (yr, gr) = (y.row(i), g.row(i));
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for ((o, p), q) in d.row_mut(i).iter_mut().zip(yr).zip(gr) {
                            *o = p * (q - dot);
                        }
                    }
                    accumulate(local, *a, d);
                }
            }
            Op::ColSoftmax(a) => {
                if self.rg(*a) {
                    let cols = y.cols();
                    let mut dots = vec![0.0; cols];
                    for i in 0..y.rows() {
                        for ((s, p), q) in dots.iter_mut().zip(y.row(i)).zip(g.row(i)) {
                            *s += p * q;
                        }
                    }
                    let mut d = Matrix::zeros(y.rows(), cols);
                    for i in 0..y.rows() {
                        for (((o, p), q), s) in
                            d.row_mut(i).iter_mut().zip(y.row(i)).zip(g.row(i)).zip(&dots)
                        {
                            *o = p * (q - s);
                        }
                    }
                    accumulate(local, *a, d);
                }
            }
            Op::LeakyRelu(a, slope) => {
                if self.rg(*a) {
                    let d = zip_map(g, self.value(*a), |q, x| if x > 0.0 { q } else { slope * q });
                    accumulate(local, *a, d);
                }
            }
            Op::Relu(a) => {
                if self.rg(*a) {
                    let d = zip_map(g, self.value(*a), |q, x| if x > 0.0 { q } else { 0.0 });
                    accumulate(local, *a, d);
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (rows, cols) = xhat.shape();
                if self.rg(*gamma) {
                    let mut d = Matrix::zeros(1, cols);
                    for i in 0..rows {
                        for ((o, q), h) in d.row_mut(0).iter_mut().zip(g.row(i)).zip(xhat.row(i)) {
                            *o += q * h;
                        }
                    }
                    accumulate(local, *gamma, d);
                }
                if self.rg(*beta) {
                    let mut d = Matrix::zeros(1, cols);
                    for i in 0..rows {
                        for (o, q) in d.row_mut(0).iter_mut().zip(g.row(i)) {
                            *o += q;
                        }
                    }
                    accumulate(local, *beta, d);
                }
                if self.rg(*x) {
                    let gam = self.value(*gamma).as_slice();
                    let n = cols as f64;
                    let mut d = Matrix::zeros(rows, cols);
                    let mut dxh = vec![0.0; cols];
                    for i in 0..rows {
                        for ((o, q), gg) in dxh.iter_mut().zip(g.row(i)).zip(gam) {
                            *o = q * gg;
                        }
                        let hr = xhat.row(i);
                        let m1 = dxh.iter().sum::<f64>() / n;
                        let m2 = dxh.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / n;
                        for ((o, dh), h) in d.row_mut(i).iter_mut().zip(&dxh).zip(hr) {
                            *o = inv_std[i] * (dh - m1 - h * m2);
                        }
                    }
                    accumulate(local, *x, d);
                }
            }
            Op::HConcat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (rows, cols) = self.shape(p);
                    if self.rg(p) {
                        let d = Matrix::from_fn(rows, cols, |i, j| g.get(i, off + j));
                        accumulate(local, p, d);
                    }
                    off += cols;
                }
            }
            Op::Dropout(a, mask) => {
                if self.rg(*a) {
                    let data = g.as_slice().iter().zip(mask).map(|(q, m)| q * m).collect();
                    let d = Matrix::from_vec(g.rows(), g.cols(), data).expect("dropout grad");
                    accumulate(local, *a, d);
                }
            }
            Op::RowNormalize(a, norms) => {
                if self.rg(*a) {
                    let mut d = Matrix::zeros(y.rows(), y.cols());
                    for (i, &n) in norms.iter().enumerate() {
                        if n == 0.0 {
                            continue;
                        }
                        let (yr, gr) = (y.row(i), g.row(i));
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for ((o, p), q) in d.row_mut(i).iter_mut().zip(yr).zip(gr) {
                            *o = (q - p * dot) / n;
                        }
                    }
                    accumulate(local, *a, d);
                }
            }
            Op::Sum(a) => {
                if self.rg(*a) {
                    let (r, c) = self.shape(*a);
                    accumulate(local, *a, Matrix::filled(r, c, g.as_slice()[0]));
                }
            }
            Op::RowSum(a) => {
                if self.rg(*a) {
                    let (r, c) = self.shape(*a);
                    let d = Matrix::from_fn(r, c, |i, _| g.get(i, 0));
                    accumulate(local, *a, d);
                }
            }
            Op::LogClamped(a, floor) => {
                if self.rg(*a) {
                    let d = zip_map(g, self.value(*a), |q, x| if x > *floor { q / x } else { 0.0 });
                    accumulate(local, *a, d);
                }
            }
        }
    }
}

fn slot(local: &mut [Option<Matrix>], v: Var, shape: (usize, usize)) -> &mut Matrix {
    local[v.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
}

fn accumulate(local: &mut [Option<Matrix>], v: Var, d: Matrix) {
    match &mut local[v.0] {
        Some(acc) => acc.add_assign(&d),
        s @ None => *s = Some(d),
    }
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| f(*x, *y))
        .collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("zip_map shape")
}

/// Numerically stable softmax of one slice, in place.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}
