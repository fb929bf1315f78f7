//! Tape-based reverse-mode automatic differentiation.
//!
//! Nodes are appended to the tape in creation order, so walking the tape
//! backwards from the loss visits every node after all of its consumers.

use std::cell::RefCell;

use rand::Rng;

use crate::error::{NnError, Result};
use crate::kernels::{self, Conv1dGeom, Conv2dGeom};
use crate::tensor::{split_axis, strides, Tensor};

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Exp(usize),
    Log(usize),
    Sigmoid(usize),
    LogSigmoid(usize),
    Tanh(usize),
    Relu(usize),
    LeakyRelu(usize, f64),
    MatMul(usize, usize),
    Softmax { x: usize, axis: usize },
    LogSoftmax { x: usize, axis: usize },
    LayerNorm { x: usize, inv_std: Vec<f64> },
    BatchNorm { x: usize, axis: usize, inv_std: Vec<f64> },
    Embedding { table: usize, ids: Vec<usize> },
    Pick { x: usize, ids: Vec<usize> },
    Conv1d { x: usize, w: usize, geom: Conv1dGeom },
    Conv2d { x: usize, w: usize, geom: Conv2dGeom },
    Reshape(usize),
    Transpose { x: usize, a: usize, b: usize },
    Sum(usize),
    Mean(usize),
    SumAxis { x: usize, axis: usize },
    MeanAxis { x: usize, axis: usize },
    MaxAxis { x: usize, argmax: Vec<usize> },
    Concat { xs: Vec<usize>, axis: usize },
    Slice { x: usize, axis: usize, start: usize },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    /// Accumulated gradient, kept only for leaves.
    grad: Option<Tensor>,
}

/// A computation tape. Every [`Var`] borrows the graph that recorded it.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A tracked input whose gradient is accumulated by [`Graph::backward`].
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push_node(value, Op::Leaf, true)
    }

    /// An untracked input; no gradient buffer is ever allocated for it.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_node(value, Op::Leaf, false)
    }

    fn push_node(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn push(&self, value: Tensor, op: Op, parents: &[usize]) -> Var<'_> {
        let rg = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|&p| nodes[p].requires_grad)
        };
        self.push_node(value, op, rg)
    }

    fn with<R>(&self, id: usize, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.nodes.borrow()[id].value)
    }

    /// Accumulated gradient of a leaf, if any has been computed.
    pub fn grad(&self, v: Var<'_>) -> Option<Tensor> {
        self.nodes.borrow()[v.id].grad.clone()
    }

    pub fn requires_grad(&self, v: Var<'_>) -> bool {
        self.nodes.borrow()[v.id].requires_grad
    }

    pub fn zero_grad(&self) {
        for n in self.nodes.borrow_mut().iter_mut() {
            n.grad = None;
        }
    }

    pub fn concat<'g>(&'g self, xs: &[Var<'g>], axis: usize) -> Result<Var<'g>> {
        let nodes = self.nodes.borrow();
        let first = nodes[xs.first().expect("concat of nothing").id].value.shape().to_vec();
        if axis >= first.len() {
            return Err(NnError::InvalidAxis {
                axis,
                rank: first.len(),
            });
        }
        let mut total = 0;
        for x in xs {
            let s = nodes[x.id].value.shape();
            let ok = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(NnError::ShapeMismatch {
                    lhs: first,
                    rhs: s.to_vec(),
                    context: "concat",
                });
            }
            total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for x in xs {
                let v = &nodes[x.id].value;
                let len = v.shape()[axis] * inner;
                out.extend_from_slice(&v.data()[o * len..(o + 1) * len]);
            }
        }
        drop(nodes);
        let ids: Vec<usize> = xs.iter().map(|x| x.id).collect();
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::Concat {
                xs: ids.clone(),
                axis,
            },
            &ids,
        ))
    }

    /// Row lookup `table[ids[i], :]`, producing `[ids.len(), dim]`.
    pub fn embedding<'g>(&'g self, table: Var<'g>, ids: &[usize]) -> Result<Var<'g>> {
        let value = self.with(table.id, |t| -> Result<Tensor> {
            if t.rank() != 2 || ids.iter().any(|&i| i >= t.shape()[0]) {
                return Err(NnError::ShapeMismatch {
                    lhs: t.shape().to_vec(),
                    rhs: vec![ids.len()],
                    context: "embedding lookup",
                });
            }
            let d = t.shape()[1];
            let mut out = Vec::with_capacity(ids.len() * d);
            for &i in ids {
                out.extend_from_slice(&t.data()[i * d..(i + 1) * d]);
            }
            Ok(Tensor::from_parts(vec![ids.len(), d], out))
        })?;
        Ok(self.push(
            value,
            Op::Embedding {
                table: table.id,
                ids: ids.to_vec(),
            },
            &[table.id],
        ))
    }

    /// Reverse pass from a scalar `loss`. Leaf gradients accumulate across calls.
    pub fn backward(&self, loss: Var<'_>) -> Result<()> {
        let mut nodes = self.nodes.borrow_mut();
        let shape = nodes[loss.id].value.shape().to_vec();
        if nodes[loss.id].value.numel() != 1 {
            return Err(NnError::NotScalar(shape));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(Tensor::full(&shape, 1.0));
        for i in (0..=loss.id).rev() {
            if !nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(nodes[i].op, Op::Leaf) {
                match nodes[i].grad.as_mut() {
                    Some(acc) => acc.add_assign(&g),
                    None => nodes[i].grad = Some(g),
                }
                continue;
            }
            propagate(&nodes, i, &g, &mut grads);
        }
        Ok(())
    }
}

fn accumulate(nodes: &[Node], grads: &mut [Option<Tensor>], id: usize, g: Tensor) {
    if !nodes[id].requires_grad {
        return;
    }
    match grads[id].as_mut() {
        Some(acc) => acc.add_assign(&g),
        None => grads[id] = Some(g),
    }
}

fn unary_grad(x: &Tensor, g: &Tensor, f: impl Fn(f64, usize) -> f64) -> Tensor {
    let data = g.data().iter().enumerate().map(|(i, &gi)| gi * f(x.data()[i], i)).collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

fn propagate(nodes: &[Node], i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let out = &nodes[i].value;
    let val = |id: usize| &nodes[id].value;
    let need = |id: usize| nodes[id].requires_grad;
    match &nodes[i].op {
        Op::Leaf => {}
        Op::Add(a, b) | Op::Sub(a, b) => {
            let sign = if matches!(nodes[i].op, Op::Sub(..)) { -1.0 } else { 1.0 };
            if need(*a) {
                accumulate(nodes, grads, *a, kernels::reduce_to(g, val(*a).shape()));
            }
            if need(*b) {
                let mut gb = kernels::reduce_to(g, val(*b).shape());
                gb.data_mut().iter_mut().for_each(|v| *v *= sign);
                accumulate(nodes, grads, *b, gb);
            }
        }
        Op::Mul(a, b) | Op::Div(a, b) => {
            let div = matches!(nodes[i].op, Op::Div(..));
            let (av, bv) = (val(*a), val(*b));
            let mut ga = vec![0.0; av.numel()];
            let mut gb = vec![0.0; bv.numel()];
            let (ad, bd, gd) = (av.data(), bv.data(), g.data());
            kernels::for_each_broadcast(out.shape(), av.shape(), bv.shape(), |o, ia, ib| {
                if div {
                    ga[ia] += gd[o] / bd[ib];
                    gb[ib] -= gd[o] * ad[ia] / (bd[ib] * bd[ib]);
                } else {
                    ga[ia] += gd[o] * bd[ib];
                    gb[ib] += gd[o] * ad[ia];
                }
            });
            accumulate(nodes, grads, *a, Tensor::from_parts(av.shape().to_vec(), ga));
            accumulate(nodes, grads, *b, Tensor::from_parts(bv.shape().to_vec(), gb));
        }
        Op::Scale(x, c) => {
            let c = *c;
            accumulate(nodes, grads, *x, unary_grad(val(*x), g, |_, _| c));
        }
        Op::AddScalar(x) => accumulate(nodes, grads, *x, g.clone()),
        Op::Exp(x) => {
            let od = out.data();
            accumulate(nodes, grads, *x, unary_grad(val(*x), g, |_, i| od[i]));
        }
        Op::Log(x) => accumulate(nodes, grads, *x, unary_grad(val(*x), g, |v, _| 1.0 / v)),
        Op::Sigmoid(x) => {
            let od = out.data();
            accumulate(
                nodes,
                grads,
                *x,
                unary_grad(val(*x), g, |_, i| od[i] * (1.0 - od[i])),
            );
        }
        Op::LogSigmoid(x) => {
            accumulate(nodes, grads, *x, unary_grad(val(*x), g, |v, _| sigmoid(-v)));
        }
        Op::Tanh(x) => {
            let od = out.data();
            accumulate(nodes, grads, *x, unary_grad(val(*x), g, |_, i| 1.0 - od[i] * od[i]));
        }
        Op::Relu(x) => accumulate(
            nodes,
            grads,
            *x,
            unary_grad(val(*x), g, |v, _| if v > 0.0 { 1.0 } else { 0.0 }),
        ),
        Op::LeakyRelu(x, s) => {
            let s = *s;
            accumulate(
                nodes,
                grads,
                *x,
                unary_grad(val(*x), g, |v, _| if v > 0.0 { 1.0 } else { s }),
            );
        }
        Op::MatMul(a, b) => {
            let (ga, gb) = kernels::matmul_backward(val(*a), val(*b), g, need(*a), need(*b));
            if let Some(ga) = ga {
                accumulate(nodes, grads, *a, ga);
            }
            if let Some(gb) = gb {
                accumulate(nodes, grads, *b, gb);
            }
        }
        Op::Softmax { x, axis } => {
            let (outer, len, inner) = split_axis(out.shape(), *axis);
            let (y, gd) = (out.data(), g.data());
            let mut dx = vec![0.0; y.len()];
            for o in 0..outer {
                for n in 0..inner {
                    let at = |k: usize| (o * len + k) * inner + n;
                    let dot: f64 = (0..len).map(|k| gd[at(k)] * y[at(k)]).sum();
                    for k in 0..len {
                        dx[at(k)] = y[at(k)] * (gd[at(k)] - dot);
                    }
                }
            }
            accumulate(nodes, grads, *x, Tensor::from_parts(out.shape().to_vec(), dx));
        }
        Op::LogSoftmax { x, axis } => {
            let (outer, len, inner) = split_axis(out.shape(), *axis);
            let (y, gd) = (out.data(), g.data());
            let mut dx = vec![0.0; y.len()];
            for o in 0..outer {
                for n in 0..inner {
                    let at = |k: usize| (o * len + k) * inner + n;
                    let total: f64 = (0..len).map(|k| gd[at(k)]).sum();
                    for k in 0..len {
                        dx[at(k)] = gd[at(k)] - y[at(k)].exp() * total;
                    }
                }
            }
            accumulate(nodes, grads, *x, Tensor::from_parts(out.shape().to_vec(), dx));
        }
        Op::LayerNorm { x, inv_std } => {
            let d = *out.shape().last().unwrap();
            let (y, gd) = (out.data(), g.data());
            let mut dx = vec![0.0; y.len()];
            for (r, &is) in inv_std.iter().enumerate() {
                let row = r * d..(r + 1) * d;
                let mg = gd[row.clone()].iter().sum::<f64>() / d as f64;
                let mgy = row.clone().map(|k| gd[k] * y[k]).sum::<f64>() / d as f64;
                for k in row {
                    dx[k] = is * (gd[k] - mg - y[k] * mgy);
                }
            }
            accumulate(nodes, grads, *x, Tensor::from_parts(out.shape().to_vec(), dx));
        }
        Op::BatchNorm { x, axis, inv_std } => {
            let (outer, ch, inner) = split_axis(out.shape(), *axis);
            let count = (outer * inner) as f64;
            let (y, gd) = (out.data(), g.data());
            let mut dx = vec![0.0; y.len()];
            for c in 0..ch {
                let idx = |o: usize, n: usize| (o * ch + c) * inner + n;
                let (mut mg, mut mgy) = (0.0, 0.0);
                for o in 0..outer {
                    for n in 0..inner {
                        mg += gd[idx(o, n)];
                        mgy += gd[idx(o, n)] * y[idx(o, n)];
                    }
                }
                mg /= count;
                mgy /= count;
                for o in 0..outer {
                    for n in 0..inner {
                        let k = idx(o, n);
                        dx[k] = inv_std[c] * (gd[k] - mg - y[k] * mgy);
                    }
                }
            }
            accumulate(nodes, grads, *x, Tensor::from_parts(out.shape().to_vec(), dx));
        }
        Op::Embedding { table, ids } => {
            let t = val(*table);
            let d = t.shape()[1];
            let mut dt = vec![0.0; t.numel()];
            for (r, &id) in ids.iter().enumerate() {
                for k in 0..d {
                    dt[id * d + k] += g.data()[r * d + k];
                }
            }
            accumulate(nodes, grads, *table, Tensor::from_parts(t.shape().to_vec(), dt));
        }
        Op::Pick { x, ids } => {
            let xv = val(*x);
            let v = *xv.shape().last().unwrap();
            let mut dx = vec![0.0; xv.numel()];
            for (r, &id) in ids.iter().enumerate() {
                dx[r * v + id] = g.data()[r];
            }
            accumulate(nodes, grads, *x, Tensor::from_parts(xv.shape().to_vec(), dx));
        }
        Op::Conv1d { x, w, geom } => {
            let (xv, wv) = (val(*x), val(*w));
            let rows = geom.c_in * geom.kernel;
            let mut cols = vec![0.0; rows * geom.out_len];
            let mut dcols = vec![0.0; rows * geom.out_len];
            let mut dx = vec![0.0; xv.numel()];
            let mut dw = vec![0.0; wv.numel()];
            for n in 0..geom.batch {
                let go = &g.data()[n * geom.c_out * geom.out_len..];
                if need(*w) {
                    geom.im2col(xv.data(), n, &mut cols);
                    kernels::gemm(
                        geom.c_out,
                        geom.out_len,
                        rows,
                        go,
                        (geom.out_len, 1),
                        &cols,
                        (1, geom.out_len),
                        &mut dw,
                        1.0,
                    );
                }
                if need(*x) {
                    kernels::gemm(
                        rows,
                        geom.c_out,
                        geom.out_len,
                        wv.data(),
                        (1, rows),
                        go,
                        (geom.out_len, 1),
                        &mut dcols,
                        0.0,
                    );
                    geom.col2im(&dcols, n, &mut dx);
                }
            }
            accumulate(nodes, grads, *x, Tensor::from_parts(xv.shape().to_vec(), dx));
            accumulate(nodes, grads, *w, Tensor::from_parts(wv.shape().to_vec(), dw));
        }
        Op::Conv2d { x, w, geom } => {
            let (xv, wv) = (val(*x), val(*w));
            let (rows, area) = (geom.patch(), geom.out_area());
            let mut cols = vec![0.0; rows * area];
            let mut dcols = vec![0.0; rows * area];
            let mut dx = vec![0.0; xv.numel()];
            let mut dw = vec![0.0; wv.numel()];
            for n in 0..geom.batch {
                let go = &g.data()[n * geom.c_out * area..];
                if need(*w) {
                    geom.im2col(xv.data(), n, &mut cols);
                    kernels::gemm(
                        geom.c_out,
                        area,
                        rows,
                        go,
                        (area, 1),
                        &cols,
                        (1, area),
                        &mut dw,
                        1.0,
                    );
                }
                if need(*x) {
                    kernels::gemm(
                        rows,
                        geom.c_out,
                        area,
                        wv.data(),
                        (1, rows),
                        go,
                        (area, 1),
                        &mut dcols,
                        0.0,
                    );
                    geom.col2im(&dcols, n, &mut dx);
                }
            }
            accumulate(nodes, grads, *x, Tensor::from_parts(xv.shape().to_vec(), dx));
            accumulate(nodes, grads, *w, Tensor::from_parts(wv.shape().to_vec(), dw));
        }
        Op::Reshape(x) => {
            let gx = Tensor::from_parts(val(*x).shape().to_vec(), g.data().to_vec());
            accumulate(nodes, grads, *x, gx);
        }
        Op::Transpose { x, a, b } => accumulate(nodes, grads, *x, swap_axes(g, *a, *b)),
        Op::Sum(x) => {
            let s = g.item();
            accumulate(nodes, grads, *x, Tensor::full(val(*x).shape(), s));
        }
        Op::Mean(x) => {
            let xv = val(*x);
            let s = g.item() / xv.numel() as f64;
            accumulate(nodes, grads, *x, Tensor::full(xv.shape(), s));
        }
        Op::SumAxis { x, axis } | Op::MeanAxis { x, axis } => {
            let xv = val(*x);
            let (outer, len, inner) = split_axis(xv.shape(), *axis);
            let scale = if matches!(nodes[i].op, Op::MeanAxis { .. }) {
                1.0 / len as f64
            } else {
                1.0
            };
            let mut dx = vec![0.0; xv.numel()];
            for o in 0..outer {
                for k in 0..len {
                    for n in 0..inner {
                        dx[(o * len + k) * inner + n] = g.data()[o * inner + n] * scale;
                    }
                }
            }
            accumulate(nodes, grads, *x, Tensor::from_parts(xv.shape().to_vec(), dx));
        }
        Op::MaxAxis { x, argmax } => {
            let xv = val(*x);
            let mut dx = vec![0.0; xv.numel()];
            for (o, &src) in argmax.iter().enumerate() {
                dx[src] += g.data()[o];
            }
            accumulate(nodes, grads, *x, Tensor::from_parts(xv.shape().to_vec(), dx));
        }
        Op::Concat { xs, axis } => {
            let (outer, _, inner) = split_axis(out.shape(), *axis);
            let mut parts: Vec<Vec<f64>> = xs.iter().map(|&x| Vec::with_capacity(val(x).numel())).collect();
            let mut off = 0;
            for _ in 0..outer {
                for (p, &x) in xs.iter().enumerate() {
                    let len = val(x).shape()[*axis] * inner;
                    parts[p].extend_from_slice(&g.data()[off..off + len]);
                    off += len;
                }
            }
            for (p, &x) in xs.iter().enumerate() {
                let gx = Tensor::from_parts(val(x).shape().to_vec(), std::mem::take(&mut parts[p]));
                accumulate(nodes, grads, x, gx);
            }
        }
        Op::Slice { x, axis, start } => {
            let xv = val(*x);
            let (outer, len, inner) = split_axis(xv.shape(), *axis);
            let width = out.shape()[*axis];
            let mut dx = vec![0.0; xv.numel()];
            for o in 0..outer {
                let src = (o * len + start) * inner;
                let dst = o * width * inner;
                dx[src..src + width * inner].copy_from_slice(&g.data()[dst..dst + width * inner]);
            }
            accumulate(nodes, grads, *x, Tensor::from_parts(xv.shape().to_vec(), dx));
        }
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

/// `ln(sigmoid(v))` without overflow or cancellation.
pub fn log_sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        -(-v).exp().ln_1p()
    } else {
        v - v.exp().ln_1p()
    }
}

fn swap_axes(t: &Tensor, a: usize, b: usize) -> Tensor {
    let src_strides = strides(t.shape());
    let mut shape = t.shape().to_vec();
    shape.swap(a, b);
    let mut perm_strides = src_strides.clone();
    perm_strides.swap(a, b);
    let n = t.numel();
    let mut out = Vec::with_capacity(n);
    let rank = shape.len();
    let mut idx = vec![0usize; rank];
    let mut src = 0usize;
    for _ in 0..n {
        out.push(t.data()[src]);
        for d in (0..rank).rev() {
            idx[d] += 1;
            src += perm_strides[d];
            if idx[d] < shape[d] {
                break;
            }
            src -= perm_strides[d] * shape[d];
            idx[d] = 0;
        }
    }
    Tensor::from_parts(shape, out)
}

fn check_axis(shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        Err(NnError::InvalidAxis {
            axis,
            rank: shape.len(),
        })
    } else {
        Ok(())
    }
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.with(self.id, |t| t.shape().to_vec())
    }

    pub fn value(&self) -> Tensor {
        self.graph.with(self.id, Tensor::clone)
    }

    pub fn item(&self) -> f64 {
        self.graph.with(self.id, Tensor::item)
    }

    pub fn grad(&self) -> Option<Tensor> {
        self.graph.grad(*self)
    }

    fn unary(self, op: Op, f: impl Fn(f64) -> f64) -> Var<'g> {
        let value = self.graph.with(self.id, |t| {
            Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
        });
        self.graph.push(value, op, &[self.id])
    }

    fn binary(self, rhs: Var<'g>, op: Op, ctx: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Var<'g>> {
        let value = {
            let nodes = self.graph.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[rhs.id].value);
            if a.shape() == b.shape() {
                let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
                Tensor::from_parts(a.shape().to_vec(), data)
            } else {
                let shape = kernels::broadcast_shape(a.shape(), b.shape()).ok_or_else(|| {
                    NnError::ShapeMismatch {
                        lhs: a.shape().to_vec(),
                        rhs: b.shape().to_vec(),
                        context: ctx,
                    }
                })?;
                let mut data = vec![0.0; shape.iter().product()];
                let (ad, bd) = (a.data(), b.data());
                kernels::for_each_broadcast(&shape, a.shape(), b.shape(), |o, ia, ib| {
                    data[o] = f(ad[ia], bd[ib]);
                });
                Tensor::from_parts(shape, data)
            }
        };
        Ok(self.graph.push(value, op, &[self.id, rhs.id]))
    }

    /// Elementwise sum with broadcasting.
    pub fn add(self, rhs: Var<'g>) -> Result<Var<'g>> {
        self.binary(rhs, Op::Add(self.id, rhs.id), "add", |a, b| a + b)
    }

    pub fn sub(self, rhs: Var<'g>) -> Result<Var<'g>> {
        self.binary(rhs, Op::Sub(self.id, rhs.id), "sub", |a, b| a - b)
    }

    pub fn mul(self, rhs: Var<'g>) -> Result<Var<'g>> {
        self.binary(rhs, Op::Mul(self.id, rhs.id), "mul", |a, b| a * b)
    }

    pub fn div(self, rhs: Var<'g>) -> Result<Var<'g>> {
        self.binary(rhs, Op::Div(self.id, rhs.id), "div", |a, b| a / b)
    }

    pub fn scale(self, c: f64) -> Var<'g> {
        self.unary(Op::Scale(self.id, c), |v| v * c)
    }

    pub fn neg(self) -> Var<'g> {
        self.scale(-1.0)
    }

    pub fn add_scalar(self, c: f64) -> Var<'g> {
        self.unary(Op::AddScalar(self.id), |v| v + c)
    }

    pub fn exp(self) -> Var<'g> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn log(self) -> Var<'g> {
        self.unary(Op::Log(self.id), f64::ln)
    }

    pub fn sigmoid(self) -> Var<'g> {
        self.unary(Op::Sigmoid(self.id), sigmoid)
    }

    pub fn log_sigmoid(self) -> Var<'g> {
        self.unary(Op::LogSigmoid(self.id), log_sigmoid)
    }

    pub fn tanh(self) -> Var<'g> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn relu(self) -> Var<'g> {
        self.unary(Op::Relu(self.id), |v| v.max(0.0))
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'g> {
        self.unary(Op::LeakyRelu(self.id, slope), move |v| if v > 0.0 { v } else { slope * v })
    }

    pub fn matmul(self, rhs: Var<'g>) -> Result<Var<'g>> {
        let value = {
            let nodes = self.graph.nodes.borrow();
            kernels::matmul_forward(&nodes[self.id].value, &nodes[rhs.id].value)?
        };
        Ok(self.graph.push(value, Op::MatMul(self.id, rhs.id), &[self.id, rhs.id]))
    }

    pub fn softmax(self, axis: usize) -> Result<Var<'g>> {
        self.softmax_impl(axis, false)
    }

    pub fn log_softmax(self, axis: usize) -> Result<Var<'g>> {
        self.softmax_impl(axis, true)
    }

    fn softmax_impl(self, axis: usize, log: bool) -> Result<Var<'g>> {
        let value = self.graph.with(self.id, |t| -> Result<Tensor> {
            check_axis(t.shape(), axis)?;
            let (outer, len, inner) = split_axis(t.shape(), axis);
            let x = t.data();
            let mut y = vec![0.0; x.len()];
            for o in 0..outer {
                for n in 0..inner {
                    let at = |k: usize| (o * len + k) * inner + n;
                    let m = (0..len).map(|k| x[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = (0..len).map(|k| (x[at(k)] - m).exp()).sum();
                    for k in 0..len {
                        y[at(k)] = if log {
                            x[at(k)] - m - z.ln()
                        } else {
                            (x[at(k)] - m).exp() / z
                        };
                    }
                }
            }
            Ok(Tensor::from_parts(t.shape().to_vec(), y))
        })?;
        let op = if log {
            Op::LogSoftmax { x: self.id, axis }
        } else {
            Op::Softmax { x: self.id, axis }
        };
        Ok(self.graph.push(value, op, &[self.id]))
    }

    /// Normalize each slice along the last axis to zero mean and unit variance.
    pub fn layer_norm(self, eps: f64) -> Var<'g> {
        let (value, inv_std) = self.graph.with(self.id, |t| {
            let d = *t.shape().last().unwrap_or(&1);
            let rows = t.numel() / d.max(1);
            let mut y = vec![0.0; t.numel()];
            let mut inv = Vec::with_capacity(rows);
            for r in 0..rows {
                let row = &t.data()[r * d..(r + 1) * d];
                let mean = row.iter().sum::<f64>() / d as f64;
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
                let is = 1.0 / (var + eps).sqrt();
                for (k, v) in row.iter().enumerate() {
                    y[r * d + k] = (v - mean) * is;
                }
                inv.push(is);
            }
            (Tensor::from_parts(t.shape().to_vec(), y), inv)
        });
        self.graph.push(value, Op::LayerNorm { x: self.id, inv_std }, &[self.id])
    }

    /// Normalize per channel (`axis`) using statistics over every other axis.
    /// Returns the normalized value with the batch mean and biased variance.
    pub fn batch_norm_train(self, axis: usize, eps: f64) -> Result<(Var<'g>, Vec<f64>, Vec<f64>)> {
        let (value, inv_std, means, vars) = self.graph.with(self.id, |t| -> Result<_> {
            check_axis(t.shape(), axis)?;
            let (outer, ch, inner) = split_axis(t.shape(), axis);
            let count = (outer * inner) as f64;
            let x = t.data();
            let mut y = vec![0.0; x.len()];
            let (mut inv, mut means, mut vars) = (vec![0.0; ch], vec![0.0; ch], vec![0.0; ch]);
            for c in 0..ch {
                let idx = |o: usize, n: usize| (o * ch + c) * inner + n;
                let mut mean = 0.0;
                for o in 0..outer {
                    for n in 0..inner {
                        mean += x[idx(o, n)];
                    }
                }
                mean /= count;
                let mut var = 0.0;
                for o in 0..outer {
                    for n in 0..inner {
                        var += (x[idx(o, n)] - mean).powi(2);
                    }
                }
                var /= count;
                let is = 1.0 / (var + eps).sqrt();
                for o in 0..outer {
                    for n in 0..inner {
                        y[idx(o, n)] = (x[idx(o, n)] - mean) * is;
                    }
                }
                inv[c] = is;
                means[c] = mean;
                vars[c] = var;
            }
            Ok((Tensor::from_parts(t.shape().to_vec(), y), inv, means, vars))
        })?;
        let v = self.graph.push(
            value,
            Op::BatchNorm {
                x: self.id,
                axis,
                inv_std,
            },
            &[self.id],
        );
        Ok((v, means, vars))
    }

    /// Select `x[.., r, ids[r]]`: one entry per row of the last axis.
    pub fn pick(self, ids: &[usize]) -> Result<Var<'g>> {
        let value = self.graph.with(self.id, |t| -> Result<Tensor> {
            let v = *t.shape().last().unwrap_or(&0);
            let rows = if v == 0 { 0 } else { t.numel() / v };
            if rows != ids.len() || ids.iter().any(|&i| i >= v) {
                return Err(NnError::ShapeMismatch {
                    lhs: t.shape().to_vec(),
                    rhs: vec![ids.len()],
                    context: "pick",
                });
            }
            let data = ids.iter().enumerate().map(|(r, &i)| t.data()[r * v + i]).collect();
            let shape = t.shape()[..t.rank() - 1].to_vec();
            Ok(Tensor::from_parts(shape, data))
        })?;
        Ok(self.graph.push(
            value,
            Op::Pick {
                x: self.id,
                ids: ids.to_vec(),
            },
            &[self.id],
        ))
    }

    /// Inverted dropout; identity when `train` is false.
    pub fn dropout(self, p: f64, train: bool, rng: &mut impl Rng) -> Result<Var<'g>> {
        if !train || p <= 0.0 {
            return Ok(self);
        }
        let shape = self.shape();
        let keep = 1.0 - p;
        let mask: Vec<f64> = (0..shape.iter().product::<usize>())
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mask = self.graph.constant(Tensor::from_parts(shape, mask));
        self.mul(mask)
    }

    /// `[batch, c_in, len] * [c_out, c_in, kernel] -> [batch, c_out, out_len]`.
    pub fn conv1d(self, w: Var<'g>, stride: usize, padding: usize) -> Result<Var<'g>> {
        let value = {
            let nodes = self.graph.nodes.borrow();
            let (x, wv) = (&nodes[self.id].value, &nodes[w.id].value);
            let geom = Conv1dGeom::new(x.shape(), wv.shape(), stride, padding)?;
            let rows = geom.c_in * geom.kernel;
            let mut cols = vec![0.0; rows * geom.out_len];
            let mut out = vec![0.0; geom.batch * geom.c_out * geom.out_len];
            for n in 0..geom.batch {
                geom.im2col(x.data(), n, &mut cols);
                kernels::gemm(
                    geom.c_out,
                    rows,
                    geom.out_len,
                    wv.data(),
                    (rows, 1),
                    &cols,
                    (geom.out_len, 1),
                    &mut out[n * geom.c_out * geom.out_len..],
                    0.0,
                );
            }
            (
                Tensor::from_parts(vec![geom.batch, geom.c_out, geom.out_len], out),
                geom,
            )
        };
        let (value, geom) = value;
        Ok(self.graph.push(
            value,
            Op::Conv1d {
                x: self.id,
                w: w.id,
                geom,
            },
            &[self.id, w.id],
        ))
    }

    /// `[batch, c_in, h, w] * [c_out, c_in, kh, kw] -> [batch, c_out, oh, ow]`.
    pub fn conv2d(
        self,
        w: Var<'g>,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Var<'g>> {
        let (value, geom) = {
            let nodes = self.graph.nodes.borrow();
            let (x, wv) = (&nodes[self.id].value, &nodes[w.id].value);
            let geom = Conv2dGeom::new(x.shape(), wv.shape(), stride, padding)?;
            let (rows, area) = (geom.patch(), geom.out_area());
            let mut cols = vec![0.0; rows * area];
            let mut out = vec![0.0; geom.batch * geom.c_out * area];
            for n in 0..geom.batch {
                geom.im2col(x.data(), n, &mut cols);
                kernels::gemm(
                    geom.c_out,
                    rows,
                    area,
                    wv.data(),
                    (rows, 1),
                    &cols,
                    (area, 1),
                    &mut out[n * geom.c_out * area..],
                    0.0,
                );
            }
            (
                Tensor::from_parts(vec![geom.batch, geom.c_out, geom.oh, geom.ow], out),
                geom,
            )
        };
        Ok(self.graph.push(
            value,
            Op::Conv2d {
                x: self.id,
                w: w.id,
                geom,
            },
            &[self.id, w.id],
        ))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'g>> {
        let value = self.graph.with(self.id, |t| t.clone().reshaped(shape))?;
        Ok(self.graph.push(value, Op::Reshape(self.id), &[self.id]))
    }

    /// Swap two axes.
    pub fn transpose(self, a: usize, b: usize) -> Result<Var<'g>> {
        let value = self.graph.with(self.id, |t| -> Result<Tensor> {
            check_axis(t.shape(), a)?;
            check_axis(t.shape(), b)?;
            Ok(swap_axes(t, a, b))
        })?;
        Ok(self.graph.push(value, Op::Transpose { x: self.id, a, b }, &[self.id]))
    }

    pub fn sum(self) -> Var<'g> {
        let s = self.graph.with(self.id, |t| t.data().iter().sum::<f64>());
        self.graph.push(Tensor::scalar(s), Op::Sum(self.id), &[self.id])
    }

    pub fn mean(self) -> Var<'g> {
        let s = self.graph.with(self.id, |t| t.data().iter().sum::<f64>() / t.numel() as f64);
        self.graph.push(Tensor::scalar(s), Op::Mean(self.id), &[self.id])
    }

    fn reduce_axis(self, axis: usize, mean: bool) -> Result<Var<'g>> {
        let value = self.graph.with(self.id, |t| -> Result<Tensor> {
            check_axis(t.shape(), axis)?;
            let (outer, len, inner) = split_axis(t.shape(), axis);
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for k in 0..len {
                    for n in 0..inner {
                        out[o * inner + n] += t.data()[(o * len + k) * inner + n];
                    }
                }
            }
            if mean {
                out.iter_mut().for_each(|v| *v /= len as f64);
            }
            let mut shape = t.shape().to_vec();
            shape.remove(axis);
            Ok(Tensor::from_parts(shape, out))
        })?;
        let op = if mean {
            Op::MeanAxis { x: self.id, axis }
        } else {
            Op::SumAxis { x: self.id, axis }
        };
        Ok(self.graph.push(value, op, &[self.id]))
    }

    /// Sum over `axis`, removing it.
    pub fn sum_axis(self, axis: usize) -> Result<Var<'g>> {
        self.reduce_axis(axis, false)
    }

    pub fn mean_axis(self, axis: usize) -> Result<Var<'g>> {
        self.reduce_axis(axis, true)
    }

    /// Maximum over `axis`, removing it. Ties route the gradient to the first maximum.
    pub fn max_axis(self, axis: usize) -> Result<Var<'g>> {
        let (value, argmax) = self.graph.with(self.id, |t| -> Result<_> {
            check_axis(t.shape(), axis)?;
            let (outer, len, inner) = split_axis(t.shape(), axis);
            let mut out = vec![f64::NEG_INFINITY; outer * inner];
            let mut arg = vec![0usize; outer * inner];
            for o in 0..outer {
                for k in 0..len {
                    for n in 0..inner {
                        let src = (o * len + k) * inner + n;
                        if t.data()[src] > out[o * inner + n] || k == 0 {
                            out[o * inner + n] = t.data()[src];
                            arg[o * inner + n] = src;
                        }
                    }
                }
            }
            let mut shape = t.shape().to_vec();
            shape.remove(axis);
            Ok((Tensor::from_parts(shape, out), arg))
        })?;
        Ok(self.graph.push(value, Op::MaxAxis { x: self.id, argmax }, &[self.id]))
    }

    /// Half-open range `start..end` along `axis`.
    pub fn slice(self, axis: usize, start: usize, end: usize) -> Result<Var<'g>> {
        let value = self.graph.with(self.id, |t| -> Result<Tensor> {
            check_axis(t.shape(), axis)?;
            if start > end || end > t.shape()[axis] {
                return Err(NnError::ShapeMismatch {
                    lhs: t.shape().to_vec(),
                    rhs: vec![start, end],
                    context: "slice",
                });
            }
            let (outer, len, inner) = split_axis(t.shape(), axis);
            let width = end - start;
            let mut out = Vec::with_capacity(outer * width * inner);
            for o in 0..outer {
                let src = (o * len + start) * inner;
                out.extend_from_slice(&t.data()[src..src + width * inner]);
            }
            let mut shape = t.shape().to_vec();
            shape[axis] = width;
            Ok(Tensor::from_parts(shape, out))
        })?;
        Ok(self.graph.push(
            value,
            Op::Slice {
                x: self.id,
                axis,
                start,
            },
            &[self.id],
        ))
    }
}
