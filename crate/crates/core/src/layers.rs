//! Parameterized layers. Each layer owns only [`ParamId`]s; the weights
//! live in a [`ParamStore`] and are bound into a [`Graph`] per forward pass.

use crate::autodiff::{conv_out, deconv_out, Graph, LstmWeights, Var};
use crate::cost::LayerSpec;
use crate::error::{Error, Result};
use crate::init;
use crate::param::{ParamId, ParamStore, StoreTag};
use crate::tensor::{IdTensor, Tensor};
use crate::Real;

/// Resolves a parameter id to the store that holds it.
pub trait Params {
    fn store(&self, id: ParamId) -> &ParamStore;

    fn bind(&self, g: &mut Graph, id: ParamId) -> Var {
        g.bind(self.store(id), id)
    }
}

impl Params for ParamStore {
    fn store(&self, id: ParamId) -> &ParamStore {
        assert_eq!(id.owner, self.owner(), "parameter belongs to another store");
        self
    }
}

/// A model store together with an optional shared bundle store.
#[derive(Clone, Copy)]
pub struct Stores<'a> {
    pub model: &'a ParamStore,
    pub bundle: Option<&'a ParamStore>,
}

impl Params for Stores<'_> {
    fn store(&self, id: ParamId) -> &ParamStore {
        match id.store {
            StoreTag::Model => self.model,
            StoreTag::Bundle => self.bundle.expect("bundle parameters without a bundle"),
        }
    }
}

fn geometry(op: &'static str, reason: String) -> Error {
    Error::Geometry { op, reason }
}

fn expect_rank(op: &'static str, shape: &[usize], rank: usize) -> Result<()> {
    if shape.len() != rank {
        return Err(geometry(op, format!("expected rank {rank}, got {shape:?}")));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, seed: u64) -> Result<Self> {
        let w = init::fan_in(&[input, output], input, seed, &format!("{name}.w"));
        let w = store.add(format!("{name}.w"), w, true)?;
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[output]), true)?;
        Ok(Dense { w, b: Some(b), input, output })
    }

    /// A bias-free layer with a given weight matrix.
    pub fn fixed(store: &mut ParamStore, name: &str, w: Tensor, trainable: bool) -> Result<Self> {
        expect_rank("dense", w.shape(), 2)?;
        let (input, output) = (w.shape()[0], w.shape()[1]);
        let w = store.add(format!("{name}.w"), w, trainable)?;
        Ok(Dense { w, b: None, input, output })
    }

    /// `x: N×input → N×output`.
    pub fn forward(&self, g: &mut Graph, p: &impl Params, x: Var) -> Result<Var> {
        let w = p.bind(g, self.w);
        let b = self.b.map(|b| p.bind(g, b));
        g.linear(x, w, b)
    }

    /// Applies the layer independently at every step of `x: B×T×input`.
    pub fn forward_seq(&self, g: &mut Graph, p: &impl Params, x: Var) -> Result<Var> {
        let s = g.shape(x).to_vec();
        expect_rank("dense", &s, 3)?;
        let flat = g.reshape(x, &[s[0] * s[1], s[2]])?;
        let y = self.forward(g, p, flat)?;
        g.reshape(y, &[s[0], s[1], self.output])
    }

    pub fn spec(&self, rows: usize) -> LayerSpec {
        LayerSpec::Dense {
            input: self.input,
            output: self.output,
            bias: self.b.is_some(),
            rows,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        seed: u64,
    ) -> Result<Self> {
        let w = init::fan_in(&[cout, cin, k, k], cin * k * k, seed, &format!("{name}.w"));
        let w = store.add(format!("{name}.w"), w, true)?;
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[cout]), true)?;
        Ok(Conv { w, b, cin, cout, k, stride, pad })
    }

    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        expect_rank("conv2d", input, 3)?;
        if input[0] != self.cin {
            return Err(geometry("conv2d", format!("expected {} channels, got {input:?}", self.cin)));
        }
        let size = |s| conv_out(s, self.k, self.stride, self.pad);
        match (size(input[1]), size(input[2])) {
            (Some(h), Some(w)) => Ok(vec![self.cout, h, w]),
            _ => Err(geometry(
                "conv2d",
                format!("kernel {} stride {} pad {} does not tile {input:?}", self.k, self.stride, self.pad),
            )),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &impl Params, x: Var) -> Result<Var> {
        let w = p.bind(g, self.w);
        let b = p.bind(g, self.b);
        g.conv2d(x, w, Some(b), self.stride, self.pad)
    }

    pub fn spec(&self, input: &[usize]) -> Result<LayerSpec> {
        let out = self.out_shape(input)?;
        Ok(LayerSpec::Conv {
            cin: self.cin,
            cout: self.cout,
            k: self.k,
            out_h: out[1],
            out_w: out[2],
            bias: true,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Deconv {
    pub w: ParamId,
    pub b: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Deconv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        seed: u64,
    ) -> Result<Self> {
        let w = init::fan_in(&[cin, cout, k, k], cin * k * k, seed, &format!("{name}.w"));
        let w = store.add(format!("{name}.w"), w, true)?;
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[cout]), true)?;
        Ok(Deconv { w, b, cin, cout, k, stride, pad })
    }

    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        expect_rank("deconv2d", input, 3)?;
        if input[0] != self.cin {
            return Err(geometry("deconv2d", format!("expected {} channels, got {input:?}", self.cin)));
        }
        let size = |s| deconv_out(s, self.k, self.stride, self.pad);
        match (size(input[1]), size(input[2])) {
            (Some(h), Some(w)) => Ok(vec![self.cout, h, w]),
            _ => Err(geometry("deconv2d", format!("empty output for {input:?}"))),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &impl Params, x: Var) -> Result<Var> {
        let w = p.bind(g, self.w);
        let b = p.bind(g, self.b);
        g.deconv2d(x, w, Some(b), self.stride, self.pad)
    }

    pub fn spec(&self, input: &[usize]) -> Result<LayerSpec> {
        let out = self.out_shape(input)?;
        Ok(LayerSpec::Deconv {
            cin: self.cin,
            cout: self.cout,
            k: self.k,
            in_h: input[1],
            in_w: input[2],
            out_h: out[1],
            out_w: out[2],
            bias: true,
        })
    }
}

pub const NORM_EPS: Real = 1e-5;

/// Layer norm over the trailing `shape` axes.
#[derive(Clone, Debug)]
pub struct Norm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub shape: Vec<usize>,
}

impl Norm {
    pub fn new(store: &mut ParamStore, name: &str, shape: &[usize]) -> Result<Self> {
        let gain = store.add(format!("{name}.gain"), Tensor::full(shape, 1.0), true)?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(shape), true)?;
        Ok(Norm {
            gain,
            bias,
            shape: shape.to_vec(),
        })
    }

    pub fn forward(&self, g: &mut Graph, p: &impl Params, x: Var) -> Result<Var> {
        let gain = p.bind(g, self.gain);
        let bias = p.bind(g, self.bias);
        g.layer_norm(x, gain, bias, NORM_EPS)
    }

    /// `elems` is the per-sample element count the norm runs over.
    pub fn spec(&self, elems: usize) -> LayerSpec {
        LayerSpec::Norm {
            features: self.shape.iter().product(),
            elems,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Lstm {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, seed: u64) -> Result<Self> {
        let bound = 1.0 / (hidden as Real).sqrt();
        let wx = init::uniform(&[input, 4 * hidden], bound, &mut init::rng_for(seed, &format!("{name}.wx")));
        let wh = init::uniform(&[hidden, 4 * hidden], bound, &mut init::rng_for(seed, &format!("{name}.wh")));
        let wx = store.add(format!("{name}.wx"), wx, true)?;
        let wh = store.add(format!("{name}.wh"), wh, true)?;
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[4 * hidden]), true)?;
        Ok(Lstm { wx, wh, b, input, hidden })
    }

    /// Runs over `x: B×T×input` from zero state. Returns the hidden
    /// sequence `B×T×hidden` and the final hidden state `B×hidden`.
    pub fn forward(&self, g: &mut Graph, p: &impl Params, x: Var) -> Result<(Var, Var)> {
        let s = g.shape(x).to_vec();
        expect_rank("lstm", &s, 3)?;
        if s[2] != self.input {
            return Err(Error::ShapeMismatch {
                op: "lstm",
                left: s,
                right: vec![self.input],
            });
        }
        let w = LstmWeights {
            wx: p.bind(g, self.wx),
            wh: p.bind(g, self.wh),
            b: p.bind(g, self.b),
        };
        let mut h = g.constant(Tensor::zeros(&[s[0], self.hidden]));
        let mut c = h;
        let mut outs = Vec::with_capacity(s[1]);
        for t in 0..s[1] {
            let xt = g.select(x, 1, t)?;
            (h, c) = g.lstm_cell(xt, h, c, &w)?;
            outs.push(h);
        }
        let seq = g.stack(&outs, 1)?;
        Ok((seq, h))
    }

    pub fn spec(&self, steps: usize) -> LayerSpec {
        LayerSpec::Lstm {
            input: self.input,
            hidden: self.hidden,
            steps,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, name: &str, vocab: usize, dim: usize, seed: u64) -> Result<Self> {
        let t = init::uniform(&[vocab, dim], 1.0, &mut init::rng_for(seed, &format!("{name}.table")));
        Self::fixed(store, name, t, true)
    }

    pub fn fixed(store: &mut ParamStore, name: &str, table: Tensor, trainable: bool) -> Result<Self> {
        expect_rank("embedding", table.shape(), 2)?;
        let (vocab, dim) = (table.shape()[0], table.shape()[1]);
        let table = store.add(format!("{name}.table"), table, trainable)?;
        Ok(Embedding { table, vocab, dim })
    }

    /// `ids: B×T → B×T×dim`.
    pub fn forward(&self, g: &mut Graph, p: &impl Params, ids: &IdTensor) -> Result<Var> {
        let t = p.bind(g, self.table);
        g.embedding(t, ids)
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::Embedding {
            vocab: self.vocab,
            dim: self.dim,
        }
    }
}
