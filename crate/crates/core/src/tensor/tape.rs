//! Reverse-mode tape.
//!
//! Ops append nodes in issue order; every input of a node has a smaller id,
//! so the reverse walk in [`Tape::backward`] sees each node after all of its
//! consumers. Gradient buffers are allocated eagerly and accumulated with
//! `+=`, which makes fan-out correct without extra bookkeeping.

use std::rc::Rc;

use crate::{Error, Result};

use super::Tensor;

/// Handle to a node on a [`Tape`]. Only valid for the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Vec<f64>,
    op: Op,
}

enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Matmul(Var, Var),
    Transpose(Var),
    AddRowBias(Var, Var),
    RowSoftmax(Var),
    /// Divide each row by its sum; `sums` caches the forward row sums.
    RowNormalize {
        x: Var,
        sums: Vec<f64>,
    },
    /// y = mask .* exp(x - shift[row]), with exp skipped where mask is zero.
    /// Backward needs only y itself: dy/dx = y (and exactly 0 where masked).
    MaskedExp {
        x: Var,
    },
    /// Row-wise layer norm; `stats` caches (mean, inv_std) per row.
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        stats: Vec<(f64, f64)>,
    },
    Tanh(Var),
    Gelu(Var),
    GatherRows {
        x: Var,
        rows: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
        len: usize,
    },
    ConcatCols(Vec<Var>),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
    },
    Sum(Var),
}

/// Computation tape. One tape per forward/backward pass; owned by one run.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op) -> Var {
        let grad = vec![0.0; data.len()];
        self.nodes.push(Node {
            shape,
            data,
            grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    /// Register a leaf holding a copy of `t`'s data.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf)
    }

    /// Register a leaf from a raw shape + buffer.
    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::contract(format!(
                "constant: data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(self.push(shape.to_vec(), data, Op::Leaf))
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn data(&self, v: Var) -> &[f64] {
        &self.node(v).data
    }

    pub fn grad(&self, v: Var) -> &[f64] {
        &self.node(v).grad
    }

    /// Copy a node out as a standalone tensor (without its gradient).
    pub fn value(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::from_vec(&n.shape, n.data.clone()).expect("node buffers are consistent")
    }

    fn matrix_dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let s = &self.node(v).shape;
        if s.len() != 2 {
            return Err(Error::contract(format!(
                "{op}: expected a rank-2 operand, got shape {s:?}"
            )));
        }
        Ok((s[0], s[1]))
    }

    // ── elementwise ─────────────────────────────────────────────────────

    /// Elementwise sum; shapes must match exactly.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.node(a).shape.clone(), &self.node(b).shape);
        if sa != *sb {
            return Err(Error::ShapeMismatch {
                op: "add",
                lhs: sa,
                rhs: sb.clone(),
            });
        }
        let data = self
            .node(a)
            .data
            .iter()
            .zip(&self.node(b).data)
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(sa, data, Op::Add(a, b)))
    }

    /// Hadamard product; shapes must match exactly.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.node(a).shape.clone(), &self.node(b).shape);
        if sa != *sb {
            return Err(Error::ShapeMismatch {
                op: "mul",
                lhs: sa,
                rhs: sb.clone(),
            });
        }
        let data = self
            .node(a)
            .data
            .iter()
            .zip(&self.node(b).data)
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(sa, data, Op::Mul(a, b)))
    }

    /// Multiply every element by a constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let shape = self.node(a).shape.clone();
        let data = self.node(a).data.iter().map(|x| x * c).collect();
        self.push(shape, data, Op::Scale(a, c))
    }

    // ── linear algebra ──────────────────────────────────────────────────

    /// Matrix product of `[m,k] x [k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, ka) = self.matrix_dims(a, "matmul")?;
        let (kb, n) = self.matrix_dims(b, "matmul")?;
        if ka != kb {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.node(a).shape.clone(),
                rhs: self.node(b).shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        mm_nn_acc(&self.node(a).data, &self.node(b).data, m, ka, n, &mut out);
        Ok(self.push(vec![m, n], out, Op::Matmul(a, b)))
    }

    /// Matrix transpose.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims(a, "transpose")?;
        let src = &self.node(a).data;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        Ok(self.push(vec![n, m], out, Op::Transpose(a)))
    }

    /// Add a length-n bias vector to every row of an `[m,n]` matrix.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "add_row_bias")?;
        let bs = &self.node(bias).shape;
        if *bs != [n] {
            return Err(Error::ShapeMismatch {
                op: "add_row_bias",
                lhs: vec![m, n],
                rhs: bs.clone(),
            });
        }
        let mut out = self.node(x).data.clone();
        let b = &self.node(bias).data;
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] += b[j];
            }
        }
        Ok(self.push(vec![m, n], out, Op::AddRowBias(x, bias)))
    }

    // ── row-wise nonlinearities ─────────────────────────────────────────

    /// Softmax over each row, with the usual max subtraction for stability.
    pub fn row_softmax(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "row_softmax")?;
        if n == 0 {
            return Err(Error::contract("row_softmax: zero-width rows"));
        }
        let src = &self.node(x).data;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &src[i * n..(i + 1) * n];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let orow = &mut out[i * n..(i + 1) * n];
            let mut sum = 0.0;
            for j in 0..n {
                let e = (row[j] - mx).exp();
                orow[j] = e;
                sum += e;
            }
            for v in orow.iter_mut() {
                *v /= sum;
            }
        }
        Ok(self.push(vec![m, n], out, Op::RowSoftmax(x)))
    }

    /// Divide each row by its sum. Entries must be nonnegative and every row
    /// sum strictly positive (the attention mixture guarantees this via the
    /// bridge/diagonal mask invariants).
    pub fn row_normalize(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "row_normalize")?;
        let src = &self.node(x).data;
        let mut sums = vec![0.0; m];
        for i in 0..m {
            let mut s = 0.0;
            for j in 0..n {
                let v = src[i * n + j];
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::numeric(format!(
                        "row_normalize: invalid entry {v} at ({i},{j})"
                    )));
                }
                s += v;
            }
            if s <= 0.0 {
                return Err(Error::numeric(format!(
                    "row_normalize: row {i} sums to {s}, expected > 0"
                )));
            }
            sums[i] = s;
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = src[i * n + j] / sums[i];
            }
        }
        Ok(self.push(vec![m, n], out, Op::RowNormalize { x, sums }))
    }

    /// `y[i,j] = mask[i,j] * exp(x[i,j] - shift[i])`, with the exponential
    /// skipped entirely where the mask is zero so masked entries can never
    /// produce `0 * inf`. `shift` is treated as a constant (no gradient).
    pub fn masked_exp(&mut self, x: Var, mask: Rc<Vec<f64>>, shift: Vec<f64>) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "masked_exp")?;
        if mask.len() != m * n {
            return Err(Error::contract(format!(
                "masked_exp: mask length {} does not match [{m},{n}]",
                mask.len()
            )));
        }
        if shift.len() != m {
            return Err(Error::contract(format!(
                "masked_exp: shift length {} does not match {m} rows",
                shift.len()
            )));
        }
        let src = &self.node(x).data;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let w = mask[i * n + j];
                if w != 0.0 {
                    out[i * n + j] = w * (src[i * n + j] - shift[i]).exp();
                }
            }
        }
        Ok(self.push(vec![m, n], out, Op::MaskedExp { x }))
    }

    /// Row-wise layer normalization with learned scale and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "layer_norm")?;
        if eps <= 0.0 {
            return Err(Error::contract(format!("layer_norm: eps {eps} must be > 0")));
        }
        for (v, name) in [(gamma, "gamma"), (beta, "beta")] {
            let s = &self.node(v).shape;
            if *s != [n] {
                return Err(Error::ShapeMismatch {
                    op: "layer_norm",
                    lhs: vec![m, n],
                    rhs: s.clone(),
                });
            }
            let _ = name;
        }
        let src = &self.node(x).data;
        let g = &self.node(gamma).data;
        let b = &self.node(beta).data;
        let mut out = vec![0.0; m * n];
        let mut stats = Vec::with_capacity(m);
        for i in 0..m {
            let row = &src[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv_std = 1.0 / (var + eps).sqrt();
            for j in 0..n {
                out[i * n + j] = (row[j] - mean) * inv_std * g[j] + b[j];
            }
            stats.push((mean, inv_std));
        }
        Ok(self.push(
            vec![m, n],
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                stats,
            },
        ))
    }

    /// Elementwise hyperbolic tangent.
    pub fn tanh(&mut self, x: Var) -> Var {
        let shape = self.node(x).shape.clone();
        let data = self.node(x).data.iter().map(|v| v.tanh()).collect();
        self.push(shape, data, Op::Tanh(x))
    }

    /// Elementwise GELU (tanh approximation).
    pub fn gelu(&mut self, x: Var) -> Var {
        let shape = self.node(x).shape.clone();
        let data = self.node(x).data.iter().map(|v| gelu_scalar(*v)).collect();
        self.push(shape, data, Op::Gelu(x))
    }

    // ── indexing / reshaping ────────────────────────────────────────────

    /// Select rows of an `[m,n]` matrix by index; indices may repeat.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "gather_rows")?;
        for &r in rows {
            if r >= m {
                return Err(Error::contract(format!(
                    "gather_rows: row index {r} out of range for {m} rows"
                )));
            }
        }
        let src = &self.node(x).data;
        let mut out = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            out.extend_from_slice(&src[r * n..(r + 1) * n]);
        }
        Ok(self.push(
            vec![rows.len(), n],
            out,
            Op::GatherRows {
                x,
                rows: rows.to_vec(),
            },
        ))
    }

    /// Take a contiguous block of columns.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "slice_cols")?;
        if start + len > n || len == 0 {
            return Err(Error::contract(format!(
                "slice_cols: range {start}..{} out of bounds for {n} columns",
                start + len
            )));
        }
        let src = &self.node(x).data;
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + start + len]);
        }
        Ok(self.push(vec![m, len], out, Op::SliceCols { x, start, len }))
    }

    /// Concatenate matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::contract("concat_cols: no operands"));
        }
        let (m, _) = self.matrix_dims(parts[0], "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        let mut total = 0;
        for &p in parts {
            let (mp, np) = self.matrix_dims(p, "concat_cols")?;
            if mp != m {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.node(parts[0]).shape.clone(),
                    rhs: self.node(p).shape.clone(),
                });
            }
            widths.push(np);
            total += np;
        }
        let mut out = vec![0.0; m * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = &self.node(p).data;
            for i in 0..m {
                out[i * total + off..i * total + off + w]
                    .copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            off += w;
        }
        Ok(self.push(vec![m, total], out, Op::ConcatCols(parts.to_vec())))
    }

    // ── losses / reductions ─────────────────────────────────────────────

    /// Mean negative log-likelihood of the given labels under row-wise
    /// softmax of the logits. Output is a scalar node.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (m, n) = self.matrix_dims(logits, "cross_entropy")?;
        if labels.len() != m {
            return Err(Error::contract(format!(
                "cross_entropy: {} labels for {m} rows",
                labels.len()
            )));
        }
        for &y in labels {
            if y >= n {
                return Err(Error::contract(format!(
                    "cross_entropy: label {y} out of range for {n} classes"
                )));
            }
        }
        let src = &self.node(logits).data;
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = &src[i * n..(i + 1) * n];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln() + mx;
            total += lse - row[y];
        }
        let mean = total / m as f64;
        Ok(self.push(
            vec![1],
            vec![mean],
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Sum of all elements; scalar node.
    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.node(x).data.iter().sum();
        self.push(vec![1], vec![s], Op::Sum(x))
    }

    // ── reverse pass ────────────────────────────────────────────────────

    /// Accumulate gradients of every node with respect to the scalar `loss`.
    ///
    /// Running backward twice without [`Tape::zero_grads`] in between is
    /// rejected: silent double accumulation is a debugging trap.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::contract(
                "backward already ran on this tape; call zero_grads before running it again",
            ));
        }
        if self.node(loss).data.len() != 1 {
            return Err(Error::contract(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.node(loss).shape
            )));
        }
        self.backward_done = true;
        self.nodes[loss.0].grad[0] = 1.0;

        for id in (0..self.nodes.len()).rev() {
            // Inputs always precede their consumers, so splitting at `id`
            // gives simultaneous access to the output node and its inputs.
            let (inputs, rest) = self.nodes.split_at_mut(id);
            let node = &rest[0];
            step_backward(node, inputs);
        }
        Ok(())
    }

    /// Clear every gradient buffer and re-arm [`Tape::backward`].
    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.backward_done = false;
    }
}

/// Dispatch one node's backward rule, accumulating into input grads.
fn step_backward(node: &Node, inputs: &mut [Node]) {
    let dy = &node.grad;
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            for (g, d) in inputs[a.0].grad.iter_mut().zip(dy) {
                *g += d;
            }
            for (g, d) in inputs[b.0].grad.iter_mut().zip(dy) {
                *g += d;
            }
        }
        Op::Mul(a, b) => {
            let (ai, bi) = (a.0, b.0);
            // Two passes to satisfy the borrow checker when a == b is false;
            // a == b (squaring) is handled by the same accumulation.
            for j in 0..dy.len() {
                let bd = inputs[bi].data[j];
                inputs[ai].grad[j] += dy[j] * bd;
            }
            for j in 0..dy.len() {
                let ad = inputs[ai].data[j];
                inputs[bi].grad[j] += dy[j] * ad;
            }
        }
        Op::Scale(a, c) => {
            for (g, d) in inputs[a.0].grad.iter_mut().zip(dy) {
                *g += c * d;
            }
        }
        Op::Matmul(a, b) => {
            let m = inputs[a.0].shape[0];
            let k = inputs[a.0].shape[1];
            let n = inputs[b.0].shape[1];
            // da += dy . b^T ; db += a^T . dy
            if a.0 == b.0 {
                let a_data = inputs[a.0].data.clone();
                mm_nt_acc(dy, &a_data, m, n, k, &mut inputs[a.0].grad);
                mm_tn_acc(&a_data, dy, m, k, n, &mut inputs[b.0].grad);
            } else {
                let (na, nb) = split_two(inputs, a.0, b.0);
                mm_nt_acc(dy, &nb.data, m, n, k, &mut na.grad);
                mm_tn_acc(&na.data, dy, m, k, n, &mut nb.grad);
            }
        }
        Op::Transpose(a) => {
            let n = node.shape[0]; // output rows = input cols
            let m = node.shape[1];
            let ga = &mut inputs[a.0].grad;
            for i in 0..n {
                for j in 0..m {
                    ga[j * n + i] += dy[i * m + j];
                }
            }
        }
        Op::AddRowBias(x, b) => {
            let n = node.shape[1];
            for (g, d) in inputs[x.0].grad.iter_mut().zip(dy) {
                *g += d;
            }
            let gb = &mut inputs[b.0].grad;
            for (idx, d) in dy.iter().enumerate() {
                gb[idx % n] += d;
            }
        }
        Op::RowSoftmax(x) => {
            let m = node.shape[0];
            let n = node.shape[1];
            let y = &node.data;
            let gx = &mut inputs[x.0].grad;
            for i in 0..m {
                let yr = &y[i * n..(i + 1) * n];
                let dr = &dy[i * n..(i + 1) * n];
                let dot: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                for j in 0..n {
                    gx[i * n + j] += yr[j] * (dr[j] - dot);
                }
            }
        }
        Op::RowNormalize { x, sums } => {
            let m = node.shape[0];
            let n = node.shape[1];
            let y = &node.data;
            let gx = &mut inputs[x.0].grad;
            for i in 0..m {
                let yr = &y[i * n..(i + 1) * n];
                let dr = &dy[i * n..(i + 1) * n];
                let dot: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                for j in 0..n {
                    gx[i * n + j] += (dr[j] - dot) / sums[i];
                }
            }
        }
        Op::MaskedExp { x } => {
            // dy/dx = y wherever the mask is nonzero; y is zero elsewhere.
            let y = &node.data;
            let gx = &mut inputs[x.0].grad;
            for j in 0..dy.len() {
                gx[j] += dy[j] * y[j];
            }
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            stats,
        } => {
            let m = node.shape[0];
            let n = node.shape[1];
            let nf = n as f64;
            let g_data = inputs[gamma.0].data.clone();
            let x_data = inputs[x.0].data.clone();
            for i in 0..m {
                let (mean, inv_std) = stats[i];
                let dr = &dy[i * n..(i + 1) * n];
                let xr = &x_data[i * n..(i + 1) * n];
                // xhat and the two row means the backward formula needs.
                let mut sum_g = 0.0; // mean of gamma .* dy
                let mut sum_gx = 0.0; // mean of gamma .* dy .* xhat
                for j in 0..n {
                    let xh = (xr[j] - mean) * inv_std;
                    let gd = g_data[j] * dr[j];
                    sum_g += gd;
                    sum_gx += gd * xh;
                }
                let mean_g = sum_g / nf;
                let mean_gx = sum_gx / nf;
                for j in 0..n {
                    let xh = (xr[j] - mean) * inv_std;
                    let gd = g_data[j] * dr[j];
                    inputs[x.0].grad[i * n + j] += (gd - mean_g - xh * mean_gx) * inv_std;
                    inputs[gamma.0].grad[j] += dr[j] * xh;
                    inputs[beta.0].grad[j] += dr[j];
                }
            }
        }
        Op::Tanh(a) => {
            let y = &node.data;
            let ga = &mut inputs[a.0].grad;
            for j in 0..dy.len() {
                ga[j] += dy[j] * (1.0 - y[j] * y[j]);
            }
        }
        Op::Gelu(a) => {
            let xd = &inputs[a.0].data;
            let mut grads = Vec::with_capacity(dy.len());
            for j in 0..dy.len() {
                grads.push(dy[j] * gelu_grad_scalar(xd[j]));
            }
            for (g, d) in inputs[a.0].grad.iter_mut().zip(grads) {
                *g += d;
            }
        }
        Op::GatherRows { x, rows } => {
            let n = node.shape[1];
            let gx = &mut inputs[x.0].grad;
            for (r_out, &r_in) in rows.iter().enumerate() {
                for j in 0..n {
                    gx[r_in * n + j] += dy[r_out * n + j];
                }
            }
        }
        Op::SliceCols { x, start, len } => {
            let m = node.shape[0];
            let n = inputs[x.0].shape[1];
            let gx = &mut inputs[x.0].grad;
            for i in 0..m {
                for j in 0..*len {
                    gx[i * n + start + j] += dy[i * *len + j];
                }
            }
        }
        Op::ConcatCols(parts) => {
            let m = node.shape[0];
            let total = node.shape[1];
            let mut off = 0;
            for &p in parts {
                let w = inputs[p.0].shape[1];
                let gp = &mut inputs[p.0].grad;
                for i in 0..m {
                    for j in 0..w {
                        gp[i * w + j] += dy[i * total + off + j];
                    }
                }
                off += w;
            }
        }
        Op::CrossEntropy { logits, labels } => {
            let m = inputs[logits.0].shape[0];
            let n = inputs[logits.0].shape[1];
            let upstream = dy[0] / m as f64;
            let src = inputs[logits.0].data.clone();
            let gx = &mut inputs[logits.0].grad;
            for (i, &y) in labels.iter().enumerate() {
                let row = &src[i * n..(i + 1) * n];
                let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let denom: f64 = row.iter().map(|v| (v - mx).exp()).sum();
                for j in 0..n {
                    let p = (row[j] - mx).exp() / denom;
                    let indicator = if j == y { 1.0 } else { 0.0 };
                    gx[i * n + j] += upstream * (p - indicator);
                }
            }
        }
        Op::Sum(a) => {
            let d = dy[0];
            for g in inputs[a.0].grad.iter_mut() {
                *g += d;
            }
        }
    }
}

/// Simultaneous mutable access to two distinct nodes, returned in argument
/// order.
fn split_two(nodes: &mut [Node], a: usize, b: usize) -> (&mut Node, &mut Node) {
    debug_assert_ne!(a, b);
    if a < b {
        let (lo, hi) = nodes.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = nodes.split_at_mut(a);
        let (x, y) = (&mut hi[0], &mut lo[b]);
        (x, y)
    }
}

/// GELU, tanh approximation. Smooth, so central differences behave.
pub(crate) fn gelu_scalar(x: f64) -> f64 {
    const SQRT_2_OVER_PI: f64 = 0.7978845608028654;
    const C: f64 = 0.044715;
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + C * x * x * x)).tanh())
}

pub(crate) fn gelu_grad_scalar(x: f64) -> f64 {
    const SQRT_2_OVER_PI: f64 = 0.7978845608028654;
    const C: f64 = 0.044715;
    let u = SQRT_2_OVER_PI * (x + C * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * C * x * x)
}

// ── matmul kernels ─────────────────────────────────────────────────────
// All accumulate into `out` so the same kernels serve forward (zeroed out)
// and backward (gradient accumulation). Inner loops run over contiguous
// slices so the autovectorizer can do its job.

/// out[m,n] += a[m,k] . b[k,n]
fn mm_nn_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            let brow = &b[l * n..(l + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// out[m,k] += a[m,n] . b[k,n]^T
fn mm_nt_acc(a: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        let orow = &mut out[i * k..(i + 1) * k];
        for j in 0..k {
            let brow = &b[j * n..(j + 1) * n];
            let mut acc = 0.0;
            for l in 0..n {
                acc += arow[l] * brow[l];
            }
            orow[j] += acc;
        }
    }
}

/// out[k,n] += a[m,k]^T . b[m,n]
fn mm_tn_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            let orow = &mut out[l * n..(l + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}
