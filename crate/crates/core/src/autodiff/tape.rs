//! Tape-based reverse-mode automatic differentiation.
//!
//! Every primitive appends a node holding its output value and the
//! handles of its inputs. Because a node can only reference nodes that
//! already exist, the tape is topologically ordered by construction and
//! [`Tape::backward`] is a single reverse sweep.

use super::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, transpose_raw, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Conv1d { x: Var, w: Var, b: Var },
    Relu(Var),
    SoftmaxRows(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    AddRowBroadcast(Var, Var),
    AddColBroadcast(Var, Var),
    Transpose(Var),
    Reshape(Var),
    SliceCols { x: Var, start: usize },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    GatherRows { table: Var, rows: Vec<usize> },
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of executed operations.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of a backward pass: `∂loss/∂node` for every grad-enabled node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
    requires: Vec<bool>,
}

impl Gradients {
    /// Gradient of a grad-enabled node. Nodes that do not influence the
    /// loss get zeros; constants get `None`.
    pub fn get(&self, var: Var) -> Option<Tensor> {
        let i = var.0;
        if !self.requires[i] {
            return None;
        }
        let shape = self.shapes[i].clone();
        Some(match &self.grads[i] {
            Some(g) => Tensor::from_parts(shape, g.clone()),
            None => Tensor::zeros(&shape),
        })
    }

    /// Moves the gradient data out, zero-filled when unreachable.
    pub fn take(&mut self, var: Var) -> Option<Vec<f64>> {
        let i = var.0;
        if !self.requires[i] {
            return None;
        }
        let n = self.shapes[i].iter().product();
        Some(self.grads[i].take().unwrap_or_else(|| vec![0.0; n]))
    }
}

fn dims2(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    t.dims2().ok_or_else(|| Error::dim(op, t.shape(), &[0, 0]))
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
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
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Grad-enabled leaf (a learnable parameter or a differentiation input).
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf; never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = dims2("matmul", ta)?;
        let (k2, n) = dims2("matmul", tb)?;
        if k != k2 {
            return Err(Error::dim("matmul", ta.shape(), tb.shape()));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(ta.data(), tb.data(), &mut out, m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), rg))
    }

    /// Length-preserving 1-d cross-correlation.
    ///
    /// `x` is `[c_in, len]`, `w` is `[c_out, c_in, k]` with odd `k`, `b` is
    /// `[c_out]`. Inputs are zero-padded by `(k-1)/2` on each side.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        let (c_in, len) = dims2("conv1d", tx)?;
        let [c_out, wc_in, k] = tw.shape()[..] else {
            return Err(Error::dim("conv1d", tx.shape(), tw.shape()));
        };
        if wc_in != c_in {
            return Err(Error::dim("conv1d", tx.shape(), tw.shape()));
        }
        if k % 2 == 0 {
            return Err(Error::Config(format!(
                "conv1d kernel size must be odd, got {k}"
            )));
        }
        if tb.shape() != [c_out] {
            return Err(Error::dim("conv1d", tw.shape(), tb.shape()));
        }
        let pad = (k - 1) / 2;
        let (xd, wd, bd) = (tx.data(), tw.data(), tb.data());
        let mut out = vec![0.0; c_out * len];
        for o in 0..c_out {
            let out_row = &mut out[o * len..(o + 1) * len];
            out_row.fill(bd[o]);
            for i in 0..c_in {
                let x_row = &xd[i * len..(i + 1) * len];
                for j in 0..k {
                    let wv = wd[(o * c_in + i) * k + j];
                    if wv == 0.0 {
                        continue;
                    }
                    // out[t] += w * x[t + j - pad]
                    let (t_lo, t_hi) = tap_range(j, pad, len);
                    for t in t_lo..t_hi {
                        out_row[t] += wv * x_row[t + j - pad];
                    }
                }
            }
        }
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(
            Tensor::from_parts(vec![c_out, len], out),
            Op::Conv1d { x, w, b },
            rg,
        ))
    }

    /// Elementwise `max(0, x)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| v.max(0.0)).collect();
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        let rg = self.rg(&[x]);
        self.push(value, Op::Relu(x), rg)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (m, n) = dims2("softmax_rows", t)?;
        let mut out = t.data().to_vec();
        for r in 0..m {
            let row = &mut out[r * n..(r + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::SoftmaxRows(x), rg))
    }

    fn binary(
        &mut self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim(op_name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|v| v * s).collect();
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        let rg = self.rg(&[x]);
        self.push(value, Op::Scale(x, s), rg)
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|v| v + s).collect();
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        let rg = self.rg(&[x]);
        self.push(value, Op::AddScalar(x), rg)
    }

    /// `x[m×n] + b[n]` added to every row. Explicit, never implied by `add`.
    pub fn add_row_broadcast(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        let (m, n) = dims2("add_row_broadcast", tx)?;
        if tb.shape() != [n] {
            return Err(Error::dim("add_row_broadcast", tx.shape(), tb.shape()));
        }
        let mut out = tx.data().to_vec();
        for r in 0..m {
            for (o, bv) in out[r * n..(r + 1) * n].iter_mut().zip(tb.data()) {
                *o += bv;
            }
        }
        let rg = self.rg(&[x, b]);
        Ok(self.push(
            Tensor::from_parts(vec![m, n], out),
            Op::AddRowBroadcast(x, b),
            rg,
        ))
    }

    /// `x[m×n] + b[m]` added to every column.
    pub fn add_col_broadcast(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        let (m, n) = dims2("add_col_broadcast", tx)?;
        if tb.shape() != [m] {
            return Err(Error::dim("add_col_broadcast", tx.shape(), tb.shape()));
        }
        let mut out = tx.data().to_vec();
        for r in 0..m {
            let bv = tb.data()[r];
            for o in &mut out[r * n..(r + 1) * n] {
                *o += bv;
            }
        }
        let rg = self.rg(&[x, b]);
        Ok(self.push(
            Tensor::from_parts(vec![m, n], out),
            Op::AddColBroadcast(x, b),
            rg,
        ))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).transposed()?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Transpose(x), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape.to_vec())?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        let (m, n) = dims2("slice_cols", t)?;
        if start >= end || end > n {
            return Err(Error::dim("slice_cols", t.shape(), &[start, end]));
        }
        let w = end - start;
        let mut out = Vec::with_capacity(m * w);
        for r in 0..m {
            out.extend_from_slice(&t.data()[r * n + start..r * n + end]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::from_parts(vec![m, w], out),
            Op::SliceCols { x, start },
            rg,
        ))
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_rows of nothing".into()))?;
        let (_, n) = dims2("concat_rows", self.value(*first))?;
        let mut rows = 0;
        let mut out = Vec::new();
        for p in parts {
            let t = self.value(*p);
            let (m, pn) = dims2("concat_rows", t)?;
            if pn != n {
                return Err(Error::dim("concat_rows", self.value(*first).shape(), t.shape()));
            }
            rows += m;
            out.extend_from_slice(t.data());
        }
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::from_parts(vec![rows, n], out),
            Op::ConcatRows(parts.to_vec()),
            rg,
        ))
    }

    /// Places matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_cols of nothing".into()))?;
        let (m, _) = dims2("concat_cols", self.value(*first))?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let t = self.value(*p);
            let (pm, pn) = dims2("concat_cols", t)?;
            if pm != m {
                return Err(Error::dim("concat_cols", self.value(*first).shape(), t.shape()));
            }
            widths.push(pn);
        }
        let n: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            for (p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(*p).data()[r * w..(r + 1) * w]);
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::from_parts(vec![m, n], out),
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    /// Embedding lookup: output row `i` is `table[rows[i]]`.
    pub fn gather_rows(&mut self, table: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (m, n) = dims2("gather_rows", t)?;
        if rows.is_empty() {
            return Err(Error::Contract("gather_rows with no indices".into()));
        }
        let mut out = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if r >= m {
                return Err(Error::Contract(format!(
                    "embedding index {r} out of range for table with {m} rows"
                )));
            }
            out.extend_from_slice(t.row(r));
        }
        let rg = self.rg(&[table]);
        Ok(self.push(
            Tensor::from_parts(vec![rows.len(), n], out),
            Op::GatherRows {
                table,
                rows: rows.to_vec(),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Each call returns fresh gradients; nothing accumulates across calls.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..n).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            requires: self.nodes.iter().map(|n| n.requires_grad).collect(),
        })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]))
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = ta.dims2().unwrap();
                let (_, n) = tb.dims2().unwrap();
                if let Some(ga) = self.slot(grads, *a) {
                    gemm_nt_acc(g, tb.data(), ga, m, n, k);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    gemm_tn_acc(ta.data(), g, gb, m, k, n);
                }
            }
            Op::Conv1d { x, w, b } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (c_in, len) = tx.dims2().unwrap();
                let (c_out, k) = (tw.shape()[0], tw.shape()[2]);
                let pad = (k - 1) / 2;
                if let Some(gb) = self.slot(grads, *b) {
                    for o in 0..c_out {
                        gb[o] += g[o * len..(o + 1) * len].iter().sum::<f64>();
                    }
                }
                if let Some(gw) = self.slot(grads, *w) {
                    for o in 0..c_out {
                        let g_row = &g[o * len..(o + 1) * len];
                        for i in 0..c_in {
                            let x_row = &tx.data()[i * len..(i + 1) * len];
                            for j in 0..k {
                                let (t_lo, t_hi) = tap_range(j, pad, len);
                                let mut acc = 0.0;
                                for t in t_lo..t_hi {
                                    acc += g_row[t] * x_row[t + j - pad];
                                }
                                gw[(o * c_in + i) * k + j] += acc;
                            }
                        }
                    }
                }
                if let Some(gx) = self.slot(grads, *x) {
                    for o in 0..c_out {
                        let g_row = &g[o * len..(o + 1) * len];
                        for i in 0..c_in {
                            let gx_row = &mut gx[i * len..(i + 1) * len];
                            for j in 0..k {
                                let wv = tw.data()[(o * c_in + i) * k + j];
                                let (t_lo, t_hi) = tap_range(j, pad, len);
                                for t in t_lo..t_hi {
                                    gx_row[t + j - pad] += wv * g_row[t];
                                }
                            }
                        }
                    }
                }
            }
            Op::Relu(x) => {
                let tx = self.value(*x);
                if let Some(gx) = self.slot(grads, *x) {
                    for ((o, &xv), &gv) in gx.iter_mut().zip(tx.data()).zip(g) {
                        if xv > 0.0 {
                            *o += gv;
                        }
                    }
                }
            }
            Op::SoftmaxRows(x) => {
                let y = node.value.data();
                let (m, n) = node.value.dims2().unwrap();
                if let Some(gx) = self.slot(grads, *x) {
                    for r in 0..m {
                        let yr = &y[r * n..(r + 1) * n];
                        let gr = &g[r * n..(r + 1) * n];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..n {
                            gx[r * n + c] += yr[c] * (gr[c] - dot);
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(gv) = self.slot(grads, *v) {
                        add_into(gv, g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for (o, gv) in gb.iter_mut().zip(g) {
                        *o -= gv;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.slot(grads, *a) {
                    for ((o, gv), bv) in ga.iter_mut().zip(g).zip(tb.data()) {
                        *o += gv * bv;
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for ((o, gv), av) in gb.iter_mut().zip(g).zip(ta.data()) {
                        *o += gv * av;
                    }
                }
            }
            Op::Scale(x, s) => {
                if let Some(gx) = self.slot(grads, *x) {
                    for (o, gv) in gx.iter_mut().zip(g) {
                        *o += gv * s;
                    }
                }
            }
            Op::AddScalar(x) | Op::Reshape(x) => {
                if let Some(gx) = self.slot(grads, *x) {
                    add_into(gx, g);
                }
            }
            Op::AddRowBroadcast(x, b) => {
                let (m, n) = node.value.dims2().unwrap();
                if let Some(gx) = self.slot(grads, *x) {
                    add_into(gx, g);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for r in 0..m {
                        add_into(gb, &g[r * n..(r + 1) * n]);
                    }
                }
            }
            Op::AddColBroadcast(x, b) => {
                let (m, n) = node.value.dims2().unwrap();
                if let Some(gx) = self.slot(grads, *x) {
                    add_into(gx, g);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for r in 0..m {
                        gb[r] += g[r * n..(r + 1) * n].iter().sum::<f64>();
                    }
                }
            }
            Op::Transpose(x) => {
                let (m, n) = node.value.dims2().unwrap();
                if let Some(gx) = self.slot(grads, *x) {
                    add_into(gx, &transpose_raw(g, m, n));
                }
            }
            Op::SliceCols { x, start } => {
                let (m, w) = node.value.dims2().unwrap();
                let n = self.value(*x).shape()[1];
                if let Some(gx) = self.slot(grads, *x) {
                    for r in 0..m {
                        add_into(&mut gx[r * n + start..r * n + start + w], &g[r * w..(r + 1) * w]);
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    if let Some(gp) = self.slot(grads, *p) {
                        add_into(gp, &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let (m, n) = node.value.dims2().unwrap();
                let mut col = 0;
                for p in parts {
                    let w = self.value(*p).shape()[1];
                    if let Some(gp) = self.slot(grads, *p) {
                        for r in 0..m {
                            add_into(&mut gp[r * w..(r + 1) * w], &g[r * n + col..r * n + col + w]);
                        }
                    }
                    col += w;
                }
            }
            Op::GatherRows { table, rows } => {
                let n = node.value.shape()[1];
                if let Some(gt) = self.slot(grads, *table) {
                    for (i, &r) in rows.iter().enumerate() {
                        add_into(&mut gt[r * n..(r + 1) * n], &g[i * n..(i + 1) * n]);
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = self.slot(grads, *x) {
                    for o in gx.iter_mut() {
                        *o += g[0];
                    }
                }
            }
            Op::Mean(x) => {
                let n = self.value(*x).len() as f64;
                if let Some(gx) = self.slot(grads, *x) {
                    for o in gx.iter_mut() {
                        *o += g[0] / n;
                    }
                }
            }
        }
    }
}

/// Output positions `t` for which input `t + j - pad` lies inside `0..len`.
fn tap_range(j: usize, pad: usize, len: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(j);
    let hi = (len + pad).saturating_sub(j).min(len);
    (lo, hi.max(lo))
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
