//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation applied to its [`Var`] handles. Calling
//! [`Tape::backward`] consumes the tape, so each tape serves exactly one
//! forward/backward pass.

use crate::error::{contract, dim_err, Error, Result};

use super::kernels::{self, Conv1dGeom, Conv1dOpts, Conv2dGeom, Padding2d};
use super::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Reshape(Var),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Narrow {
        src: Var,
        axis: usize,
        start: usize,
    },
    Sum(Var),
    Mean(Var),
    MseLoss(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        geom: Conv1dGeom,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: Conv2dGeom,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Matmul(Var, Var),
    Transpose(Var),
    SoftmaxRows(Var),
    Gather {
        src: Var,
        index: Vec<usize>,
    },
    Scatter {
        src: Var,
        index: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients of the tracked leaves that the loss depends on.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Number of leaves that received a gradient.
    pub fn len(&self) -> usize {
        self.grads.iter().flatten().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Append-only record of operations. Inputs always precede their outputs.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn outer_inner(shape: &[usize], axis: usize) -> (usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, inner)
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

    /// Records a differentiation target.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn data(&self, var: Var) -> &[f64] {
        self.nodes[var.0].value.data()
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<Vec<usize>> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(dim_err!("{what}: shapes {sa:?} and {sb:?} differ"));
        }
        Ok(sa.to_vec())
    }

    fn zip_with(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let shape = self.same_shape(a, b, what)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(shape, data)?, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|v| v * factor);
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Scale(a, factor), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Joins tensors along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(dim_err!("concat of zero tensors"));
        };
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(dim_err!("concat axis {axis} out of range for {base:?}"));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let conforms = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !conforms {
                return Err(dim_err!("concat along {axis}: {s:?} does not conform to {base:?}"));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, inner) = outer_inner(&shape, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let chunk = self.shape(p)[axis] * inner;
                data.extend_from_slice(&self.data(p)[o * chunk..(o + 1) * chunk]);
            }
        }
        let rg = self.any_grad(parts);
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, src: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let src_shape = self.shape(src).to_vec();
        if axis >= src_shape.len() || len == 0 || start + len > src_shape[axis] {
            return Err(dim_err!(
                "narrow [{start}, {}) along axis {axis} out of range for {src_shape:?}",
                start + len
            ));
        }
        let mut shape = src_shape.clone();
        shape[axis] = len;
        let (outer, inner) = outer_inner(&src_shape, axis);
        let src_data = self.data(src);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let from = (o * src_shape[axis] + start) * inner;
            data.extend_from_slice(&src_data[from..from + len * inner]);
        }
        let rg = self.any_grad(&[src]);
        Ok(self.push(Tensor::new(shape, data)?, Op::Narrow { src, axis, start }, rg))
    }

    /// Splits along `axis` into consecutive pieces of the given sizes.
    pub fn split(&mut self, src: Var, axis: usize, sizes: &[usize]) -> Result<Vec<Var>> {
        let mut start = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &len in sizes {
            out.push(self.narrow(src, axis, start, len)?);
            start += len;
        }
        let dim = self.shape(src).get(axis).copied().unwrap_or(0);
        if start != dim {
            return Err(dim_err!("split sizes sum to {start}, axis {axis} has {dim}"));
        }
        Ok(out)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        let rg = self.any_grad(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let d = self.data(a);
        let m = d.iter().sum::<f64>() / d.len() as f64;
        let rg = self.any_grad(&[a]);
        self.push(Tensor::scalar(m), Op::Mean(a), rg)
    }

    /// Mean of squared differences over all elements.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape(pred, target, "mse_loss")?;
        let (p, t) = (self.data(pred), self.data(target));
        let loss = p.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64;
        let rg = self.any_grad(&[pred, target]);
        Ok(self.push(Tensor::scalar(loss), Op::MseLoss(pred, target), rg))
    }

    /// `weight · input + bias` for input `[n_in]`, weight `[n_out, n_in]`, bias `[n_out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        let (&[n_in], &[n_out, w_in], &[b_out]) = (sx, sw, sb) else {
            return Err(dim_err!("linear expects [n_in], [n_out, n_in], [n_out]; got {sx:?}, {sw:?}, {sb:?}"));
        };
        if w_in != n_in || b_out != n_out {
            return Err(dim_err!("linear shape mismatch: {sx:?}, {sw:?}, {sb:?}"));
        }
        let mut out = kernels::matmul(self.data(w), self.data(x), n_out, n_in, 1);
        for (o, bv) in out.iter_mut().zip(self.data(b)) {
            *o += bv;
        }
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(Tensor::new(vec![n_out], out)?, Op::Linear { x, w, b }, rg))
    }

    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, opts: Conv1dOpts) -> Result<Var> {
        let geom = Conv1dGeom::new(self.shape(x), self.shape(w), self.shape(b), opts)?;
        let out = kernels::conv1d_forward(self.data(x), self.data(w), self.data(b), &geom);
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(
            Tensor::new(vec![geom.cout, geom.out_len], out)?,
            Op::Conv1d { x, w, b, geom },
            rg,
        ))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, padding: Padding2d) -> Result<Var> {
        let geom = Conv2dGeom::new(self.shape(x), self.shape(w), self.shape(b), padding)?;
        let out = kernels::conv2d_forward(self.data(x), self.data(w), self.data(b), &geom);
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(
            Tensor::new(vec![geom.cout, geom.out_h, geom.out_w], out)?,
            Op::Conv2d { x, w, b, geom },
            rg,
        ))
    }

    /// Normalizes each position of a `[channels, len]` input across channels,
    /// then applies per-channel `gamma` scale and `beta` shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (sx, sg, sb) = (self.shape(x), self.shape(gamma), self.shape(beta));
        let (&[c, len], &[gc], &[bc]) = (sx, sg, sb) else {
            return Err(dim_err!("layer_norm expects [c, len], [c], [c]; got {sx:?}, {sg:?}, {sb:?}"));
        };
        if gc != c || bc != c {
            return Err(dim_err!("layer_norm channel mismatch: {sx:?}, {sg:?}, {sb:?}"));
        }
        let (xhat, inv_std) = kernels::channel_norm(self.data(x), c, len, eps);
        let (g, bt) = (self.data(gamma), self.data(beta));
        let out = xhat
            .iter()
            .enumerate()
            .map(|(idx, &v)| g[idx / len] * v + bt[idx / len])
            .collect();
        let rg = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(
            Tensor::new(vec![c, len], out)?,
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

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (&[m, k], &[k2, n]) = (sa, sb) else {
            return Err(dim_err!("matmul expects two matrices; got {sa:?}, {sb:?}"));
        };
        if k != k2 {
            return Err(dim_err!("matmul inner dimensions differ: {sa:?} x {sb:?}"));
        }
        let out = kernels::matmul(self.data(a), self.data(b), m, k, n);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::Matmul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let &[r, c] = self.shape(a) else {
            return Err(dim_err!("transpose expects a matrix; got {:?}", self.shape(a)));
        };
        let out = kernels::transpose(self.data(a), r, c);
        let rg = self.any_grad(&[a]);
        Ok(self.push(Tensor::new(vec![c, r], out)?, Op::Transpose(a), rg))
    }

    /// Softmax across the columns of each row of a matrix.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let &[r, c] = self.shape(a) else {
            return Err(dim_err!("softmax_rows expects a matrix; got {:?}", self.shape(a)));
        };
        let src = self.data(a);
        let mut out = vec![0.0; r * c];
        for (row, orow) in src.chunks(c).zip(out.chunks_mut(c)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (o, &v) in orow.iter_mut().zip(row) {
                *o = (v - max).exp();
                total += *o;
            }
            orow.iter_mut().for_each(|o| *o /= total);
        }
        let rg = self.any_grad(&[a]);
        Ok(self.push(Tensor::new(vec![r, c], out)?, Op::SoftmaxRows(a), rg))
    }

    /// 1-D tensor of the flat elements of `src` at `index`, in order.
    pub fn gather(&mut self, src: Var, index: &[usize]) -> Result<Var> {
        let n = self.value(src).numel();
        if index.is_empty() {
            return Err(Error::EmptyOutput("gather with no indices".into()));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= n) {
            return Err(dim_err!("gather index {bad} out of range for {n} elements"));
        }
        let d = self.data(src);
        let out = index.iter().map(|&i| d[i]).collect();
        let rg = self.any_grad(&[src]);
        Ok(self.push(
            Tensor::new(vec![index.len()], out)?,
            Op::Gather {
                src,
                index: index.to_vec(),
            },
            rg,
        ))
    }

    /// 1-D tensor of length `len`, zero except `out[index[j]] = src[j]`.
    /// Indices must be distinct.
    pub fn scatter(&mut self, src: Var, index: &[usize], len: usize) -> Result<Var> {
        let n = self.value(src).numel();
        contract!(index.len() == n, "scatter of {n} values into {} positions", index.len());
        let mut seen = vec![false; len];
        for &i in index {
            if i >= len {
                return Err(dim_err!("scatter index {i} out of range for length {len}"));
            }
            contract!(!seen[i], "scatter index {i} repeated");
            seen[i] = true;
        }
        let mut out = vec![0.0; len];
        for (&i, &v) in index.iter().zip(self.data(src)) {
            out[i] = v;
        }
        let rg = self.any_grad(&[src]);
        Ok(self.push(
            Tensor::new(vec![len], out)?,
            Op::Scatter {
                src,
                index: index.to_vec(),
            },
            rg,
        ))
    }

    /// Propagates gradients from a scalar `loss` to every tracked leaf it
    /// depends on. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let nodes = self.nodes;
        contract!(loss.0 < nodes.len(), "loss variable is not on this tape");
        contract!(
            nodes[loss.0].value.numel() == 1,
            "backward needs a scalar loss, got shape {:?}",
            nodes[loss.0].value.shape()
        );
        let mut acc: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        if nodes[loss.0].requires_grad {
            acc[loss.0] = Some(vec![1.0]);
        }
        let mut leaf_grads: Vec<Option<Tensor>> = vec![None; nodes.len()];

        for id in (0..=loss.0).rev() {
            let Some(g) = acc[id].take() else { continue };
            let node = &nodes[id];
            let mut send = |var: Var, contribution: Vec<f64>| {
                if !nodes[var.0].requires_grad {
                    return;
                }
                match &mut acc[var.0] {
                    Some(existing) => existing.iter_mut().zip(&contribution).for_each(|(e, c)| *e += c),
                    slot @ None => *slot = Some(contribution),
                }
            };
            let val = |var: Var| nodes[var.0].value.data();
            match &node.op {
                Op::Leaf => {
                    leaf_grads[id] = Some(Tensor::new(node.value.shape().to_vec(), g)?);
                }
                Op::Add(a, b) => {
                    send(*b, g.clone());
                    send(*a, g);
                }
                Op::Sub(a, b) => {
                    send(*b, g.iter().map(|v| -v).collect());
                    send(*a, g);
                }
                Op::Mul(a, b) => {
                    send(*a, g.iter().zip(val(*b)).map(|(g, y)| g * y).collect());
                    send(*b, g.iter().zip(val(*a)).map(|(g, x)| g * x).collect());
                }
                Op::Scale(a, f) => send(*a, g.iter().map(|v| v * f).collect()),
                Op::Relu(a) => send(
                    *a,
                    g.iter()
                        .zip(val(*a))
                        .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                        .collect(),
                ),
                Op::Reshape(a) => send(*a, g),
                Op::Concat { parts, axis } => {
                    let shape = node.value.shape();
                    let (outer, inner) = outer_inner(shape, *axis);
                    let row = shape[*axis] * inner;
                    let mut offset = 0;
                    for &p in parts {
                        let chunk = nodes[p.0].value.shape()[*axis] * inner;
                        let mut part = Vec::with_capacity(outer * chunk);
                        for o in 0..outer {
                            let from = o * row + offset;
                            part.extend_from_slice(&g[from..from + chunk]);
                        }
                        offset += chunk;
                        send(p, part);
                    }
                }
                Op::Narrow { src, axis, start } => {
                    let src_shape = nodes[src.0].value.shape();
                    let (outer, inner) = outer_inner(src_shape, *axis);
                    let len = node.value.shape()[*axis];
                    let mut full = vec![0.0; nodes[src.0].value.numel()];
                    for o in 0..outer {
                        let to = (o * src_shape[*axis] + start) * inner;
                        let from = o * len * inner;
                        full[to..to + len * inner].copy_from_slice(&g[from..from + len * inner]);
                    }
                    send(*src, full);
                }
                Op::Sum(a) => send(*a, vec![g[0]; nodes[a.0].value.numel()]),
                Op::Mean(a) => {
                    let n = nodes[a.0].value.numel();
                    send(*a, vec![g[0] / n as f64; n]);
                }
                Op::MseLoss(p, t) => {
                    let n = node_numel(&nodes, *p) as f64;
                    let diff: Vec<f64> = val(*p)
                        .iter()
                        .zip(val(*t))
                        .map(|(a, b)| 2.0 * g[0] * (a - b) / n)
                        .collect();
                    send(*t, diff.iter().map(|v| -v).collect());
                    send(*p, diff);
                }
                Op::Linear { x, w, b } => {
                    let (n_out, n_in) = (g.len(), nodes[x.0].value.numel());
                    send(*x, kernels::matmul(&g, val(*w), 1, n_out, n_in));
                    send(*w, kernels::matmul(&g, val(*x), n_out, 1, n_in));
                    send(*b, g);
                }
                Op::Conv1d { x, w, b, geom } => {
                    let (gx, gw, gb) = kernels::conv1d_backward(val(*x), val(*w), &g, geom);
                    send(*x, gx);
                    send(*w, gw);
                    send(*b, gb);
                }
                Op::Conv2d { x, w, b, geom } => {
                    let (gx, gw, gb) = kernels::conv2d_backward(val(*x), val(*w), &g, geom);
                    send(*x, gx);
                    send(*w, gw);
                    send(*b, gb);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let c = nodes[gamma.0].value.numel();
                    let len = inv_std.len();
                    let gam = val(*gamma);
                    let mut gg = vec![0.0; c];
                    let mut gbeta = vec![0.0; c];
                    let mut gx = vec![0.0; c * len];
                    for (t, &istd) in inv_std.iter().enumerate() {
                        let mut mean_gh = 0.0;
                        let mut mean_gh_xh = 0.0;
                        for ch in 0..c {
                            let idx = ch * len + t;
                            let gh = g[idx] * gam[ch];
                            mean_gh += gh;
                            mean_gh_xh += gh * xhat[idx];
                            gg[ch] += g[idx] * xhat[idx];
                            gbeta[ch] += g[idx];
                        }
                        mean_gh /= c as f64;
                        mean_gh_xh /= c as f64;
                        for (ch, &gm) in gam.iter().enumerate() {
                            let idx = ch * len + t;
                            gx[idx] = istd * (g[idx] * gm - mean_gh - xhat[idx] * mean_gh_xh);
                        }
                    }
                    send(*x, gx);
                    send(*gamma, gg);
                    send(*beta, gbeta);
                }
                Op::Matmul(a, b) => {
                    let (&[m, k], &[_, n]) = (nodes[a.0].value.shape(), nodes[b.0].value.shape()) else {
                        unreachable!("matmul operands are matrices")
                    };
                    let bt = kernels::transpose(val(*b), k, n);
                    let at = kernels::transpose(val(*a), m, k);
                    send(*a, kernels::matmul(&g, &bt, m, n, k));
                    send(*b, kernels::matmul(&at, &g, k, m, n));
                }
                Op::Transpose(a) => {
                    let &[r, c] = node.value.shape() else {
                        unreachable!("transpose output is a matrix")
                    };
                    send(*a, kernels::transpose(&g, r, c));
                }
                Op::SoftmaxRows(a) => {
                    let c = node.value.shape()[1];
                    let y = node.value.data();
                    let mut ga = vec![0.0; y.len()];
                    for ((gr, yr), out) in g.chunks(c).zip(y.chunks(c)).zip(ga.chunks_mut(c)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                        for ((o, g), y) in out.iter_mut().zip(gr).zip(yr) {
                            *o = y * (g - dot);
                        }
                    }
                    send(*a, ga);
                }
                Op::Gather { src, index } => {
                    let mut full = vec![0.0; nodes[src.0].value.numel()];
                    for (&i, gv) in index.iter().zip(&g) {
                        full[i] += gv;
                    }
                    send(*src, full);
                }
                Op::Scatter { src, index } => send(*src, index.iter().map(|&i| g[i]).collect()),
            }
        }
        Ok(Gradients { grads: leaf_grads })
    }
}

fn node_numel(nodes: &[Node], var: Var) -> usize {
    nodes[var.0].value.numel()
}
