//! Forward definitions of the recorded operations.

use super::kernels::{self, Geom};
use super::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::tensor::{split_axis, IdTensor, Tensor};
use crate::Real;

/// Bound weights of one LSTM cell. Gates are packed as `[i, f, g, o]`
/// along the last axis: `wx: X×4H`, `wh: H×4H`, `b: 4H`.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights {
    pub wx: Var,
    pub wh: Var,
    pub b: Var,
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

fn geometry(op: &'static str, reason: impl Into<String>) -> Error {
    Error::Geometry {
        op,
        reason: reason.into(),
    }
}

pub(crate) fn conv_geom(xs: &[usize], ws: &[usize], stride: usize, pad: usize) -> Geom {
    let k = ws[2];
    Geom {
        c: xs[1],
        h: xs[2],
        w: xs[3],
        k,
        stride,
        pad,
        oh: kernels::conv_out(xs[2], k, stride, pad).unwrap_or(0),
        ow: kernels::conv_out(xs[3], k, stride, pad).unwrap_or(0),
    }
}

/// Geometry of a transposed convolution, expressed as the correlation
/// whose adjoint it is: the image is the deconvolution output.
pub(crate) fn deconv_geom(xs: &[usize], ws: &[usize], stride: usize, pad: usize) -> Geom {
    let k = ws[2];
    Geom {
        c: ws[1],
        h: kernels::deconv_out(xs[2], k, stride, pad).unwrap_or(0),
        w: kernels::deconv_out(xs[3], k, stride, pad).unwrap_or(0),
        k,
        stride,
        pad,
        oh: xs[2],
        ow: xs[3],
    }
}

impl Graph {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_map(&mut self, a: Var, b: Var, f: impl Fn(Real, Real) -> Real) -> Tensor {
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape().to_vec(), data).expect("same shape")
    }

    fn map(&self, a: Var, f: impl Fn(Real) -> Real) -> Tensor {
        let av = self.value(a);
        Tensor::new(av.shape().to_vec(), av.data().iter().map(|&x| f(x)).collect()).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let t = self.zip_map(a, b, |x, y| x + y);
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let t = self.zip_map(a, b, |x, y| x - y);
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let t = self.zip_map(a, b, |x, y| x * y);
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: Real) -> Var {
        let t = self.map(a, |x| c * x);
        self.push(t, Op::Scale(a, c))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(mismatch("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        kernels::mm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::MatMul(a, b)))
    }

    /// `x·w + b` for `x: N×I`, `w: I×O`, `b: O`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[0] {
            return Err(mismatch("linear", sx, sw));
        }
        let (m, k, n) = (sx[0], sx[1], sw[1]);
        let mut out = vec![0.0; m * n];
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.shape() != [n] {
                return Err(mismatch("linear", bv.shape(), &[n]));
            }
            for row in out.chunks_exact_mut(n) {
                row.copy_from_slice(bv.data());
            }
        }
        kernels::mm_acc(self.value(x).data(), self.value(w).data(), &mut out, m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::Linear { x, w, b }))
    }

    fn check_bias(&self, op: &'static str, b: Option<Var>, channels: usize) -> Result<()> {
        if let Some(b) = b {
            if self.shape(b) != [channels] {
                return Err(mismatch(op, self.shape(b), &[channels]));
            }
        }
        Ok(())
    }

    /// Cross-correlation of `x: B×C×H×W` with `w: O×C×K×K`, plus per-channel bias.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 4 || ws.len() != 4 || ws[2] != ws[3] {
            return Err(geometry("conv2d", format!("expected NCHW input and OIKK weight, got {xs:?} and {ws:?}")));
        }
        if xs[1] != ws[1] {
            return Err(geometry("conv2d", format!("input has {} channels, weight expects {}", xs[1], ws[1])));
        }
        let geom = conv_geom(&xs, &ws, stride, pad);
        if geom.oh == 0 || geom.ow == 0 {
            return Err(geometry(
                "conv2d",
                format!("{}x{} input, kernel {}, stride {stride}, padding {pad} has no integer output size", xs[2], xs[3], ws[2]),
            ));
        }
        let cout = ws[0];
        self.check_bias("conv2d", b, cout)?;
        let (rows, cols) = (geom.rows(), geom.cols());
        let img = xs[1] * xs[2] * xs[3];
        let mut out = vec![0.0; xs[0] * cout * cols];
        let mut col = vec![0.0; rows * cols];
        let (xv, wv) = (self.value(x).data(), self.value(w).data());
        let bv = b.map(|b| self.value(b).data());
        for (bi, ob) in out.chunks_exact_mut(cout * cols).enumerate() {
            if let Some(bv) = bv {
                for (o, plane) in ob.chunks_exact_mut(cols).enumerate() {
                    plane.fill(bv[o]);
                }
            }
            kernels::im2col(&xv[bi * img..(bi + 1) * img], &geom, &mut col);
            kernels::mm_acc(wv, &col, ob, cout, rows, cols);
        }
        let t = Tensor::new(vec![xs[0], cout, geom.oh, geom.ow], out)?;
        Ok(self.push(t, Op::Conv2d { x, w, b, stride, pad }))
    }

    /// Transposed convolution of `x: B×I×H×W` with `w: I×O×K×K`; the output
    /// extent is `(H−1)·stride − 2·pad + K`.
    pub fn deconv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 4 || ws.len() != 4 || ws[2] != ws[3] {
            return Err(geometry("deconv2d", format!("expected NCHW input and IOKK weight, got {xs:?} and {ws:?}")));
        }
        if xs[1] != ws[0] {
            return Err(geometry("deconv2d", format!("input has {} channels, weight expects {}", xs[1], ws[0])));
        }
        let geom = deconv_geom(&xs, &ws, stride, pad);
        if geom.h == 0 || geom.w == 0 {
            return Err(geometry(
                "deconv2d",
                format!("{}x{} input, kernel {}, stride {stride}, padding {pad} has no positive output size", xs[2], xs[3], ws[2]),
            ));
        }
        let (cin, cout) = (ws[0], ws[1]);
        self.check_bias("deconv2d", b, cout)?;
        let (rows, cols) = (geom.rows(), geom.cols());
        let img = cout * geom.h * geom.w;
        let mut out = vec![0.0; xs[0] * img];
        let mut col = vec![0.0; rows * cols];
        let (xv, wv) = (self.value(x).data(), self.value(w).data());
        let bv = b.map(|b| self.value(b).data());
        for (bi, ob) in out.chunks_exact_mut(img).enumerate() {
            if let Some(bv) = bv {
                for (o, plane) in ob.chunks_exact_mut(geom.h * geom.w).enumerate() {
                    plane.fill(bv[o]);
                }
            }
            col.fill(0.0);
            kernels::mm_tn_acc(wv, &xv[bi * cin * cols..(bi + 1) * cin * cols], &mut col, cin, rows, cols);
            kernels::col2im(&col, &geom, ob);
        }
        let t = Tensor::new(vec![xs[0], cout, geom.h, geom.w], out)?;
        Ok(self.push(t, Op::Deconv2d { x, w, b, stride, pad }))
    }

    /// Normalizes each sample over the trailing axes covered by `gain`
    /// (biased variance), then applies `gain` and `bias` elementwise.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: Real) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let gs = self.shape(gain).to_vec();
        if self.shape(bias) != gs.as_slice() {
            return Err(mismatch("layer_norm", &gs, self.shape(bias)));
        }
        if gs.is_empty() || gs.len() > xs.len() || xs[xs.len() - gs.len()..] != gs[..] {
            return Err(mismatch("layer_norm", &xs, &gs));
        }
        let f: usize = gs.iter().product();
        if f == 0 {
            return Err(Error::EmptyAxis { op: "layer_norm", axis: xs.len() - 1 });
        }
        let fr = f as Real;
        let (xv, gv, bv) = (self.value(x).data(), self.value(gain).data(), self.value(bias).data());
        let rows = xv.len() / f;
        let mut out = vec![0.0; xv.len()];
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = &xv[r * f..(r + 1) * f];
            let mean = row.iter().sum::<Real>() / fr;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / fr;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[r] = inv;
            for j in 0..f {
                let h = (row[j] - mean) * inv;
                xhat[r * f + j] = h;
                out[r * f + j] = gv[j] * h + bv[j];
            }
        }
        let t = Tensor::new(xs, out)?;
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    /// Rectifier; the subgradient at zero is zero.
    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.map(a, |x| if x > 0.0 { x } else { 0.0 });
        self.push(t, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.map(a, |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        });
        self.push(t, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.map(a, Real::tanh);
        self.push(t, Op::Tanh(a))
    }

    /// Max-stabilized softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if axis >= xs.len() {
            return Err(Error::EmptyAxis { op: "softmax", axis });
        }
        let (outer, dim, inner) = split_axis(&xs, axis);
        let xv = self.value(x).data();
        let mut out = vec![0.0; xv.len()];
        for o in 0..outer {
            for n in 0..inner {
                let at = |j: usize| (o * dim + j) * inner + n;
                let max = (0..dim).map(|j| xv[at(j)]).fold(Real::NEG_INFINITY, Real::max);
                let mut total = 0.0;
                for j in 0..dim {
                    let e = (xv[at(j)] - max).exp();
                    out[at(j)] = e;
                    total += e;
                }
                for j in 0..dim {
                    out[at(j)] /= total;
                }
            }
        }
        let t = Tensor::new(xs, out)?;
        Ok(self.push(t, Op::Softmax { x, axis }))
    }

    /// Index of the maximum along `axis`, lowest index on ties. The result
    /// is detached from the tape, so nothing downstream of it can route
    /// gradient back into `x`.
    pub fn argmax(&self, x: Var, axis: usize) -> Result<IdTensor> {
        argmax_values(self.value(x), axis)
    }

    /// Row gather from `table: V×D`; output shape is `ids.shape ++ [D]`.
    pub fn embedding(&mut self, table: Var, ids: &IdTensor) -> Result<Var> {
        let ts = self.shape(table);
        if ts.len() != 2 {
            return Err(geometry("embedding", format!("table must be V×D, got {ts:?}")));
        }
        let (v, d) = (ts[0], ts[1]);
        if let Some((position, &index)) = ids.data().iter().enumerate().find(|(_, &id)| id >= v) {
            return Err(Error::IndexOutOfRange {
                op: "embedding",
                position,
                index,
                bound: v,
            });
        }
        let tv = self.value(table).data();
        let mut out = Vec::with_capacity(ids.numel() * d);
        for &id in ids.data() {
            out.extend_from_slice(&tv[id * d..(id + 1) * d]);
        }
        let mut shape = ids.shape().to_vec();
        shape.push(d);
        let t = Tensor::new(shape, out)?;
        Ok(self.push(
            t,
            Op::Embedding {
                table,
                ids: ids.data().to_vec(),
            },
        ))
    }

    /// Mean negative log-likelihood of `labels` under softmax(`logits`), `logits: N×K`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let ls = self.shape(logits);
        if ls.len() != 2 || ls[0] != labels.len() {
            return Err(mismatch("cross_entropy", ls, &[labels.len()]));
        }
        let (n, k) = (ls[0], ls[1]);
        if let Some((position, &index)) = labels.iter().enumerate().find(|(_, &y)| y >= k) {
            return Err(Error::IndexOutOfRange {
                op: "cross_entropy",
                position,
                index,
                bound: k,
            });
        }
        let lv = self.value(logits).data();
        let mut probs = vec![0.0; n * k];
        let mut loss = 0.0;
        for r in 0..n {
            let row = &lv[r * k..(r + 1) * k];
            let max = row.iter().copied().fold(Real::NEG_INFINITY, Real::max);
            let total: Real = row.iter().map(|z| (z - max).exp()).sum();
            let lse = max + total.ln();
            for j in 0..k {
                probs[r * k + j] = (row[j] - lse).exp();
            }
            loss += lse - row[labels[r]];
        }
        let t = Tensor::scalar(loss / n as Real);
        Ok(self.push(
            t,
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let s: Real = av.iter().zip(bv).map(|(x, y)| (x - y) * (x - y)).sum();
        let t = Tensor::scalar(s / av.len() as Real);
        Ok(self.push(t, Op::Mse(a, b)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let t = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(t, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let t = Tensor::scalar(v.data().iter().sum::<Real>() / v.numel() as Real);
        self.push(t, Op::Mean(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        Ok(self.push(t, Op::Reshape(a)))
    }

    /// Drops `axis` by taking slice `index` along it.
    pub fn select(&mut self, x: Var, axis: usize, index: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if axis >= xs.len() {
            return Err(Error::EmptyAxis { op: "select", axis });
        }
        if index >= xs[axis] {
            return Err(Error::IndexOutOfRange {
                op: "select",
                position: axis,
                index,
                bound: xs[axis],
            });
        }
        let (outer, dim, inner) = split_axis(&xs, axis);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let src = (o * dim + index) * inner;
            out.extend_from_slice(&xv[src..src + inner]);
        }
        let mut shape = xs;
        shape.remove(axis);
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::Select { x, axis, index }))
    }

    /// Stacks equally shaped tensors along a new `axis`.
    pub fn stack(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts.first().ok_or(Error::EmptyAxis { op: "stack", axis })?;
        let ps = self.shape(*first).to_vec();
        if axis > ps.len() {
            return Err(Error::EmptyAxis { op: "stack", axis });
        }
        for p in parts {
            if self.shape(*p) != ps.as_slice() {
                return Err(mismatch("stack", &ps, self.shape(*p)));
            }
        }
        let outer: usize = ps[..axis].iter().product();
        let inner: usize = ps[axis..].iter().product();
        let mut out = Vec::with_capacity(outer * inner * parts.len());
        for o in 0..outer {
            for p in parts {
                out.extend_from_slice(&self.value(*p).data()[o * inner..(o + 1) * inner]);
            }
        }
        let mut shape = ps;
        shape.insert(axis, parts.len());
        let t = Tensor::new(shape, out)?;
        Ok(self.push(
            t,
            Op::Stack {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    /// Contiguous range `start..start+len` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if axis >= xs.len() {
            return Err(Error::EmptyAxis { op: "slice", axis });
        }
        if len == 0 || start + len > xs[axis] {
            return Err(geometry("slice", format!("range {start}..{} outside axis of {}", start + len, xs[axis])));
        }
        let (outer, dim, inner) = split_axis(&xs, axis);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let src = (o * dim + start) * inner;
            out.extend_from_slice(&xv[src..src + len * inner]);
        }
        let mut shape = xs;
        shape[axis] = len;
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::Slice { x, axis, start }))
    }

    /// Joins tensors along an existing `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts.first().ok_or(Error::EmptyAxis { op: "concat", axis })?;
        let ps = self.shape(*first).to_vec();
        if axis >= ps.len() {
            return Err(Error::EmptyAxis { op: "concat", axis });
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let compatible = s.len() == ps.len() && s.iter().zip(&ps).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(mismatch("concat", &ps, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&ps, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let len = self.shape(*p)[axis] * inner;
                out.extend_from_slice(&self.value(*p).data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = ps;
        shape[axis] = total;
        let t = Tensor::new(shape, out)?;
        Ok(self.push(
            t,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    /// Mean over `axis`, removing it.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if axis >= xs.len() {
            return Err(Error::EmptyAxis { op: "mean_axis", axis });
        }
        let (outer, dim, inner) = split_axis(&xs, axis);
        let xv = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..dim {
                let src = (o * dim + j) * inner;
                for n in 0..inner {
                    out[o * inner + n] += xv[src + n];
                }
            }
        }
        let inv = 1.0 / dim as Real;
        out.iter_mut().for_each(|v| *v *= inv);
        let mut shape = xs;
        shape.remove(axis);
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::MeanAxis { x, axis }))
    }

    /// Non-overlapping `k×k` average pooling of an NCHW tensor.
    pub fn avg_pool2d(&mut self, x: Var, k: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || k == 0 || xs[2] % k != 0 || xs[3] % k != 0 {
            return Err(geometry("avg_pool2d", format!("cannot pool {xs:?} with window {k}")));
        }
        let (planes, h, w) = (xs[0] * xs[1], xs[2], xs[3]);
        let (oh, ow) = (h / k, w / k);
        let xv = self.value(x).data();
        let mut out = vec![0.0; planes * oh * ow];
        for p in 0..planes {
            for y in 0..h {
                for xx in 0..w {
                    out[(p * oh + y / k) * ow + xx / k] += xv[(p * h + y) * w + xx];
                }
            }
        }
        let inv = 1.0 / (k * k) as Real;
        out.iter_mut().for_each(|v| *v *= inv);
        let t = Tensor::new(vec![xs[0], xs[1], oh, ow], out)?;
        Ok(self.push(t, Op::AvgPool2d { x, k }))
    }

    /// One LSTM step: returns `(h_t, c_t)` for inputs `x: B×X`, `h, c: B×H`.
    pub fn lstm_cell(&mut self, x: Var, h: Var, c: Var, w: &LstmWeights) -> Result<(Var, Var)> {
        let hs = self.shape(h).to_vec();
        let whs = self.shape(w.wh).to_vec();
        if hs.len() != 2 || whs.len() != 2 || whs[1] != 4 * whs[0] || hs[1] != whs[0] {
            return Err(mismatch("lstm_cell", &hs, &whs));
        }
        if self.shape(c) != hs.as_slice() {
            return Err(mismatch("lstm_cell", &hs, self.shape(c)));
        }
        let hidden = whs[0];
        let zx = self.linear(x, w.wx, Some(w.b))?;
        let zh = self.matmul(h, w.wh)?;
        let z = self.add(zx, zh)?;
        let zi = self.slice(z, 1, 0, hidden)?;
        let zf = self.slice(z, 1, hidden, hidden)?;
        let zg = self.slice(z, 1, 2 * hidden, hidden)?;
        let zo = self.slice(z, 1, 3 * hidden, hidden)?;
        let i = self.sigmoid(zi);
        let f = self.sigmoid(zf);
        let g = self.tanh(zg);
        let o = self.sigmoid(zo);
        let keep = self.mul(f, c)?;
        let write = self.mul(i, g)?;
        let c_t = self.add(keep, write)?;
        let squashed = self.tanh(c_t);
        let h_t = self.mul(o, squashed)?;
        Ok((h_t, c_t))
    }
}

pub(crate) fn argmax_values(t: &Tensor, axis: usize) -> Result<IdTensor> {
    let xs = t.shape();
    if axis >= xs.len() || xs[axis] == 0 {
        return Err(Error::EmptyAxis { op: "argmax", axis });
    }
    let (outer, dim, inner) = split_axis(xs, axis);
    let xv = t.data();
    let mut out = Vec::with_capacity(outer * inner);
    for o in 0..outer {
        for n in 0..inner {
            let mut best = 0;
            let mut best_v = xv[o * dim * inner + n];
            for j in 1..dim {
                let v = xv[(o * dim + j) * inner + n];
                if v > best_v {
                    best = j;
                    best_v = v;
                }
            }
            out.push(best);
        }
    }
    let mut shape = xs.to_vec();
    shape.remove(axis);
    if shape.is_empty() {
        shape.push(1);
    }
    IdTensor::new(shape, out)
}
