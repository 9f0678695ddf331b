//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation as a node holding its forward
//! value. Nodes are appended in evaluation order, so the tape is a
//! topological order by construction and cycles cannot be formed.
//! [`Graph::backward`] walks the tape in reverse from a scalar loss and
//! accumulates gradients on every node that requires them.
//!
//! Parameters are owned by a [`ParamStore`] outside the graph. They
//! enter through [`Graph::bind`], which creates one leaf per parameter
//! per graph; frozen parameters become leaves without gradient.
//!
//! No operation broadcasts. Shapes must agree exactly, and any shape
//! adaptation is done explicitly by the caller.

mod kernels;
mod ops;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::tensor::{split_axis, Tensor};
use crate::Real;

pub use ops::LstmWeights;
pub(crate) use kernels::{conv_out, deconv_out};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
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
    Scale(Var, Real),
    MatMul(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    Deconv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<Real>,
        inv_std: Vec<Real>,
    },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<Real>,
    },
    Mse(Var, Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Select {
        x: Var,
        axis: usize,
        index: usize,
    },
    Stack {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    MeanAxis {
        x: Var,
        axis: usize,
    },
    AvgPool2d {
        x: Var,
        k: usize,
    },
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) | Mse(a, b) => vec![*a, *b],
            Scale(a, _) | Relu(a) | Sigmoid(a) | Tanh(a) | Sum(a) | Mean(a) | Reshape(a) => vec![*a],
            Linear { x, w, b } | Conv2d { x, w, b, .. } | Deconv2d { x, w, b, .. } => {
                let mut v = vec![*x, *w];
                v.extend(b.iter().copied());
                v
            }
            LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
            Softmax { x, .. }
            | Select { x, .. }
            | Slice { x, .. }
            | MeanAxis { x, .. }
            | AvgPool2d { x, .. } => vec![*x],
            Embedding { table, .. } => vec![*table],
            CrossEntropy { logits, .. } => vec![*logits],
            Stack { parts, .. } | Concat { parts, .. } => parts.clone(),
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Vec<Real>>,
    requires_grad: bool,
    op: Op,
}

/// A single-threaded computation tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bound: Vec<(ParamId, Var)>,
    bound_index: HashMap<ParamId, Var>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf. Leaves with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable input.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// A value that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Binds a stored parameter, reusing the same leaf if already bound.
    pub fn bind(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.bound_index.get(&id) {
            return v;
        }
        let p = store.get(id);
        let v = self.leaf(p.value.clone(), p.trainable);
        self.bound.push((id, v));
        self.bound_index.insert(id, v);
        v
    }

    pub fn bound_params(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.bound.iter().copied()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[Real]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn zero_grad(&mut self) {
        self.nodes.iter_mut().for_each(|n| n.grad = None);
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse-mode sweep from a one-element `loss`. Gradients add onto
    /// whatever earlier sweeps left behind until [`Graph::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss);
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarLoss(shape.to_vec()));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut pending: Vec<Option<Vec<Real>>> = vec![None; loss.0 + 1];
        pending[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = pending[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut pending);
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, d)| *a += d),
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    /// Pushes the gradient `g` of node `i` onto its parents.
    fn propagate(&self, i: usize, g: &[Real], pending: &mut [Option<Vec<Real>>]) {
        let nodes = &self.nodes;
        let val = |v: &Var| nodes[v.0].value.data();
        let shp = |v: &Var| nodes[v.0].value.shape();
        let mut acc = |v: &Var, f: &mut dyn FnMut(&mut [Real])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = pending[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()]);
            f(slot);
        };
        let out = nodes[i].value.data();

        match &nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(a, &mut |s| add_into(s, g));
                acc(b, &mut |s| add_into(s, g));
            }
            Op::Sub(a, b) => {
                acc(a, &mut |s| add_into(s, g));
                acc(b, &mut |s| s.iter_mut().zip(g).for_each(|(x, d)| *x -= d));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(a), val(b));
                acc(a, &mut |s| {
                    for ((x, d), y) in s.iter_mut().zip(g).zip(bv) {
                        *x += d * y;
                    }
                });
                acc(b, &mut |s| {
                    for ((x, d), y) in s.iter_mut().zip(g).zip(av) {
                        *x += d * y;
                    }
                });
            }
            Op::Scale(a, c) => acc(a, &mut |s| s.iter_mut().zip(g).for_each(|(x, d)| *x += c * d)),
            Op::MatMul(a, b) => {
                let (m, k) = (shp(a)[0], shp(a)[1]);
                let n = shp(b)[1];
                let (av, bv) = (val(a), val(b));
                acc(a, &mut |s| kernels::mm_nt_acc(g, bv, s, m, n, k));
                acc(b, &mut |s| kernels::mm_tn_acc(av, g, s, m, k, n));
            }
            Op::Linear { x, w, b } => {
                let (m, k) = (shp(x)[0], shp(x)[1]);
                let n = shp(w)[1];
                let (xv, wv) = (val(x), val(w));
                acc(x, &mut |s| kernels::mm_nt_acc(g, wv, s, m, n, k));
                acc(w, &mut |s| kernels::mm_tn_acc(xv, g, s, m, k, n));
                if let Some(b) = b {
                    acc(b, &mut |s| {
                        for row in g.chunks_exact(n) {
                            add_into(s, row);
                        }
                    });
                }
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                let geom = ops::conv_geom(shp(x), shp(w), *stride, *pad);
                let batch = shp(x)[0];
                let cout = shp(w)[0];
                let (rows, cols) = (geom.rows(), geom.cols());
                let img = geom.c * geom.h * geom.w;
                let (xv, wv) = (val(x), val(w));
                let mut col = vec![0.0; rows * cols];
                let x_needs = nodes[x.0].requires_grad;
                let w_needs = nodes[w.0].requires_grad;
                let mut dcol = vec![0.0; rows * cols];
                for bi in 0..batch {
                    let gout = &g[bi * cout * cols..(bi + 1) * cout * cols];
                    if w_needs {
                        kernels::im2col(&xv[bi * img..(bi + 1) * img], &geom, &mut col);
                        acc(w, &mut |s| kernels::mm_nt_acc(gout, &col, s, cout, cols, rows));
                    }
                    if x_needs {
                        dcol.fill(0.0);
                        kernels::mm_tn_acc(wv, gout, &mut dcol, cout, rows, cols);
                        acc(x, &mut |s| kernels::col2im(&dcol, &geom, &mut s[bi * img..(bi + 1) * img]));
                    }
                }
                if let Some(b) = b {
                    acc(b, &mut |s| {
                        for (j, chunk) in g.chunks_exact(cols).enumerate() {
                            s[j % cout] += chunk.iter().sum::<Real>();
                        }
                    });
                }
            }
            Op::Deconv2d { x, w, b, stride, pad } => {
                let xs = shp(x);
                let (batch, cin, pin) = (xs[0], xs[1], xs[2] * xs[3]);
                let geom = ops::deconv_geom(xs, shp(w), *stride, *pad);
                let cout = geom.c;
                let (rows, cols) = (geom.rows(), geom.cols());
                let img = geom.c * geom.h * geom.w;
                let (xv, wv) = (val(x), val(w));
                let mut dcol = vec![0.0; rows * cols];
                for bi in 0..batch {
                    kernels::im2col(&g[bi * img..(bi + 1) * img], &geom, &mut dcol);
                    let xb = &xv[bi * cin * pin..(bi + 1) * cin * pin];
                    acc(x, &mut |s| {
                        kernels::mm_acc(wv, &dcol, &mut s[bi * cin * pin..(bi + 1) * cin * pin], cin, rows, cols)
                    });
                    acc(w, &mut |s| kernels::mm_nt_acc(xb, &dcol, s, cin, cols, rows));
                }
                if let Some(b) = b {
                    let plane = geom.h * geom.w;
                    acc(b, &mut |s| {
                        for (j, chunk) in g.chunks_exact(plane).enumerate() {
                            s[j % cout] += chunk.iter().sum::<Real>();
                        }
                    });
                }
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let f = nodes[gain.0].value.numel();
                let gv = val(gain);
                acc(gain, &mut |s| {
                    for (grow, hrow) in g.chunks_exact(f).zip(xhat.chunks_exact(f)) {
                        for ((sv, d), h) in s.iter_mut().zip(grow).zip(hrow) {
                            *sv += d * h;
                        }
                    }
                });
                acc(bias, &mut |s| {
                    for grow in g.chunks_exact(f) {
                        add_into(s, grow);
                    }
                });
                acc(x, &mut |s| {
                    let fr = f as Real;
                    for (r, ((srow, grow), hrow)) in s
                        .chunks_exact_mut(f)
                        .zip(g.chunks_exact(f))
                        .zip(xhat.chunks_exact(f))
                        .enumerate()
                    {
                        let mut sum_d = 0.0;
                        let mut sum_dh = 0.0;
                        for j in 0..f {
                            let d = grow[j] * gv[j];
                            sum_d += d;
                            sum_dh += d * hrow[j];
                        }
                        let k = inv_std[r] / fr;
                        for j in 0..f {
                            let d = grow[j] * gv[j];
                            srow[j] += k * (fr * d - sum_d - hrow[j] * sum_dh);
                        }
                    }
                });
            }
            Op::Relu(a) => {
                let av = val(a);
                acc(a, &mut |s| {
                    for ((x, d), &v) in s.iter_mut().zip(g).zip(av) {
                        if v > 0.0 {
                            *x += d;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => acc(a, &mut |s| {
                for ((x, d), y) in s.iter_mut().zip(g).zip(out) {
                    *x += d * y * (1.0 - y);
                }
            }),
            Op::Tanh(a) => acc(a, &mut |s| {
                for ((x, d), y) in s.iter_mut().zip(g).zip(out) {
                    *x += d * (1.0 - y * y);
                }
            }),
            Op::Softmax { x, axis } => {
                let (outer, dim, inner) = split_axis(shp(x), *axis);
                acc(x, &mut |s| {
                    for o in 0..outer {
                        for n in 0..inner {
                            let at = |j: usize| (o * dim + j) * inner + n;
                            let dot: Real = (0..dim).map(|j| g[at(j)] * out[at(j)]).sum();
                            for j in 0..dim {
                                s[at(j)] += out[at(j)] * (g[at(j)] - dot);
                            }
                        }
                    }
                });
            }
            Op::Embedding { table, ids } => {
                let d = shp(table)[1];
                acc(table, &mut |s| {
                    for (row, &id) in g.chunks_exact(d).zip(ids) {
                        add_into(&mut s[id * d..(id + 1) * d], row);
                    }
                });
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let k = shp(logits)[1];
                let n = labels.len() as Real;
                let scale = g[0] / n;
                acc(logits, &mut |s| {
                    for (r, &y) in labels.iter().enumerate() {
                        for j in 0..k {
                            let onehot = if j == y { 1.0 } else { 0.0 };
                            s[r * k + j] += scale * (probs[r * k + j] - onehot);
                        }
                    }
                });
            }
            Op::Mse(a, b) => {
                let (av, bv) = (val(a), val(b));
                let scale = 2.0 * g[0] / av.len() as Real;
                acc(a, &mut |s| {
                    for ((x, p), q) in s.iter_mut().zip(av).zip(bv) {
                        *x += scale * (p - q);
                    }
                });
                acc(b, &mut |s| {
                    for ((x, p), q) in s.iter_mut().zip(av).zip(bv) {
                        *x -= scale * (p - q);
                    }
                });
            }
            Op::Sum(a) => acc(a, &mut |s| s.iter_mut().for_each(|x| *x += g[0])),
            Op::Mean(a) => {
                let n = nodes[a.0].value.numel() as Real;
                acc(a, &mut |s| s.iter_mut().for_each(|x| *x += g[0] / n));
            }
            Op::Reshape(a) => acc(a, &mut |s| add_into(s, g)),
            Op::Select { x, axis, index } => {
                let (outer, dim, inner) = split_axis(shp(x), *axis);
                acc(x, &mut |s| {
                    for o in 0..outer {
                        let dst = (o * dim + index) * inner;
                        add_into(&mut s[dst..dst + inner], &g[o * inner..(o + 1) * inner]);
                    }
                });
            }
            Op::Stack { parts, axis } => {
                let (outer, dim, inner) = split_axis(nodes[i].value.shape(), *axis);
                for (j, p) in parts.iter().enumerate() {
                    acc(p, &mut |s| {
                        for o in 0..outer {
                            let src = (o * dim + j) * inner;
                            add_into(&mut s[o * inner..(o + 1) * inner], &g[src..src + inner]);
                        }
                    });
                }
            }
            Op::Slice { x, axis, start } => {
                let (outer, dim, inner) = split_axis(shp(x), *axis);
                let len = nodes[i].value.shape()[*axis];
                acc(x, &mut |s| {
                    for o in 0..outer {
                        let dst = (o * dim + start) * inner;
                        let src = o * len * inner;
                        add_into(&mut s[dst..dst + len * inner], &g[src..src + len * inner]);
                    }
                });
            }
            Op::Concat { parts, axis } => {
                let total = nodes[i].value.shape()[*axis];
                let (outer, _, inner) = split_axis(nodes[i].value.shape(), *axis);
                let mut offset = 0;
                for p in parts {
                    let len = shp(p)[*axis];
                    acc(p, &mut |s| {
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            add_into(&mut s[o * len * inner..(o + 1) * len * inner], &g[src..src + len * inner]);
                        }
                    });
                    offset += len;
                }
            }
            Op::MeanAxis { x, axis } => {
                let (outer, dim, inner) = split_axis(shp(x), *axis);
                let inv = 1.0 / dim as Real;
                acc(x, &mut |s| {
                    for o in 0..outer {
                        for j in 0..dim {
                            for n in 0..inner {
                                s[(o * dim + j) * inner + n] += g[o * inner + n] * inv;
                            }
                        }
                    }
                });
            }
            Op::AvgPool2d { x, k } => {
                let xs = shp(x);
                let (planes, h, w) = (xs[0] * xs[1], xs[2], xs[3]);
                let (oh, ow) = (h / k, w / k);
                let inv = 1.0 / (k * k) as Real;
                acc(x, &mut |s| {
                    for p in 0..planes {
                        for y in 0..h {
                            for xx in 0..w {
                                s[(p * h + y) * w + xx] += g[(p * oh + y / k) * ow + xx / k] * inv;
                            }
                        }
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [Real], src: &[Real]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}
