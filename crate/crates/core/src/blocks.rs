//! Chain blocks `g_m`, the adapters that fit hidden states to a bundle's
//! input contract, sleep and dream blocks, and the dream branch.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::autoencoder::{AutoencoderArch, AutoencoderBundle, BundleInput, BundleKind};
use crate::cost::{Elementwise, LayerSpec};
use crate::error::{Error, Result};
use crate::layers::{Conv, Deconv, Dense, Lstm, Norm, Params};
use crate::param::ParamStore;
use crate::tensor::{numel, IdTensor, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connection {
    Sleep,
    Dream,
}

fn build_err(boundary: &str, reason: impl Into<String>) -> Error {
    Error::Build {
        boundary: boundary.into(),
        reason: reason.into(),
    }
}

/// Checks `x` is `B×shape` and returns `B`.
fn check_batch(g: &Graph, x: Var, shape: &[usize], op: &'static str) -> Result<usize> {
    let got = g.shape(x);
    if got.len() != shape.len() + 1 || got[1..] != *shape {
        return Err(Error::ShapeMismatch {
            op,
            left: got.to_vec(),
            right: shape.to_vec(),
        });
    }
    Ok(got[0])
}

fn batched(b: usize, shape: &[usize]) -> Vec<usize> {
    let mut s = vec![b];
    s.extend_from_slice(shape);
    s
}

fn relu_spec(elems: usize) -> LayerSpec {
    LayerSpec::Elementwise {
        op: Elementwise::Relu,
        elems,
    }
}

#[derive(Clone, Debug)]
struct ConvLayer {
    conv: Conv,
    norm: Option<Norm>,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
}

#[derive(Clone, Debug)]
enum ChainKind {
    Visual(Vec<ConvLayer>),
    Textual { lstm: Lstm, norm: Norm },
}

/// One chain-like block: `L × (conv → norm → relu)` on `C×H×W`, or
/// `lstm → norm` on `T×X`.
#[derive(Clone, Debug)]
pub struct ChainBlock {
    kind: ChainKind,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
}

impl ChainBlock {
    /// Same-size convolutions with an odd `kernel` and padding `kernel / 2`.
    #[allow(clippy::too_many_arguments)]
    pub fn visual(
        store: &mut ParamStore,
        name: &str,
        in_shape: &[usize],
        width: usize,
        layers: usize,
        kernel: usize,
        norm: bool,
        seed: u64,
    ) -> Result<Self> {
        if in_shape.len() != 3 || in_shape.contains(&0) {
            return Err(build_err(name, format!("visual block input must be [C, H, W], got {in_shape:?}")));
        }
        if width == 0 || layers == 0 {
            return Err(build_err(name, "width and layer count must be positive"));
        }
        if kernel % 2 == 0 {
            return Err(build_err(name, format!("kernel {kernel} must be odd to keep the spatial size")));
        }
        let mut shape = in_shape.to_vec();
        let mut out = Vec::with_capacity(layers);
        for l in 1..=layers {
            let conv = Conv::new(store, &format!("{name}.conv{l}"), shape[0], width, kernel, 1, kernel / 2, seed)?;
            let next = conv.out_shape(&shape).map_err(|e| build_err(name, e.to_string()))?;
            let norm = if norm {
                Some(Norm::new(store, &format!("{name}.norm{l}"), &next)?)
            } else {
                None
            };
            out.push(ConvLayer {
                conv,
                norm,
                in_shape: shape,
                out_shape: next.clone(),
            });
            shape = next;
        }
        Ok(ChainBlock {
            kind: ChainKind::Visual(out),
            in_shape: in_shape.to_vec(),
            out_shape: shape,
        })
    }

    pub fn textual(store: &mut ParamStore, name: &str, in_shape: &[usize], hidden: usize, seed: u64) -> Result<Self> {
        if in_shape.len() != 2 || in_shape.contains(&0) {
            return Err(build_err(name, format!("textual block input must be [T, X], got {in_shape:?}")));
        }
        if hidden == 0 {
            return Err(build_err(name, "hidden size must be positive"));
        }
        let lstm = Lstm::new(store, &format!("{name}.lstm"), in_shape[1], hidden, seed)?;
        let norm = Norm::new(store, &format!("{name}.norm"), &[hidden])?;
        Ok(ChainBlock {
            kind: ChainKind::Textual { lstm, norm },
            in_shape: in_shape.to_vec(),
            out_shape: vec![in_shape[0], hidden],
        })
    }

    pub fn in_shape(&self) -> &[usize] {
        &self.in_shape
    }

    pub fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }

    pub fn forward(&self, g: &mut Graph, p: &impl Params, h: Var) -> Result<Var> {
        check_batch(g, h, &self.in_shape, "chain block")?;
        match &self.kind {
            ChainKind::Visual(layers) => {
                let mut x = h;
                for layer in layers {
                    x = layer.conv.forward(g, p, x)?;
                    if let Some(norm) = &layer.norm {
                        x = norm.forward(g, p, x)?;
                    }
                    x = g.relu(x);
                }
                Ok(x)
            }
            ChainKind::Textual { lstm, norm } => {
                let (seq, _) = lstm.forward(g, p, h)?;
                norm.forward(g, p, seq)
            }
        }
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        match &self.kind {
            ChainKind::Visual(layers) => {
                let mut out = Vec::new();
                for layer in layers {
                    let elems = numel(&layer.out_shape);
                    out.push(layer.conv.spec(&layer.in_shape).expect("checked at build"));
                    if let Some(norm) = &layer.norm {
                        out.push(norm.spec(elems));
                    }
                    out.push(relu_spec(elems));
                }
                out
            }
            ChainKind::Textual { lstm, norm } => {
                vec![lstm.spec(self.in_shape[0]), norm.spec(numel(&self.out_shape))]
            }
        }
    }
}

/// Per-position `argmax(softmax(hidden · proj))` for `hidden: B×T×H` and
/// `proj: H×V`. Computed off the caller's graph, so nothing upstream of the
/// ids can receive gradient.
pub fn quantize_sequence(hidden: &Tensor, proj: &Tensor) -> Result<IdTensor> {
    let hs = hidden.shape();
    let ps = proj.shape();
    if hs.len() != 3 || ps.len() != 2 || hs[2] != ps[0] {
        return Err(Error::ShapeMismatch {
            op: "quantize_sequence",
            left: hs.to_vec(),
            right: ps.to_vec(),
        });
    }
    let (b, t) = (hs[0], hs[1]);
    let mut g = Graph::new();
    let h = g.constant(hidden.clone());
    let w = g.constant(proj.clone());
    let flat = g.reshape(h, &[b * t, hs[2]])?;
    let logits = g.matmul(flat, w)?;
    let probs = g.softmax(logits, 1)?;
    let ids = g.argmax(probs, 1)?;
    IdTensor::new(vec![b, t], ids.data().to_vec())
}

/// Maps a block's input to what the bundle's encoder reads.
#[derive(Clone, Debug)]
pub enum PreAdapter {
    Identity,
    /// Upsampling deconv (kernel = stride = smallest sufficient integer
    /// factor), then a valid conv cropping to the bundle's exact size.
    Visual { deconv: Deconv, crop: Conv, up_shape: Vec<usize> },
    /// Bias-free `H×V` projection feeding [`quantize_sequence`].
    Quantize { proj: Dense },
}

/// Maps the bundle's output (latent or reconstruction) back to the block's
/// output shape.
#[derive(Clone, Debug)]
pub enum PostAdapter {
    /// Plain reshape; requires matching element counts.
    Identity,
    /// Dense from the flattened source, then reshape.
    Dense { dense: Dense },
    /// Strided valid conv down to the block's spatial size, then a 1×1
    /// channel projection.
    Conv { conv: Conv, proj: Conv },
    /// The same dense layer at every time step.
    TimeDense { dense: Dense },
}

/// What the encoder actually saw.
#[derive(Clone, Debug)]
pub enum AdaptedInput {
    Image(Var),
    Tokens(IdTensor),
}

impl AdaptedInput {
    pub fn as_bundle_input(&self) -> BundleInput<'_> {
        match self {
            AdaptedInput::Image(v) => BundleInput::Image(*v),
            AdaptedInput::Tokens(ids) => BundleInput::Tokens(ids),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adapter {
    pub pre: PreAdapter,
    pub post: PostAdapter,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
    /// Per-sample shape of what the post-adapter reads.
    source_shape: Vec<usize>,
}

impl Adapter {
    /// Synthesizes both directions for a block with the given input and
    /// output shapes. `identity` skips all learned layers and requires the
    /// shapes to line up already.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        store: &mut ParamStore,
        name: &str,
        connection: Connection,
        in_shape: &[usize],
        out_shape: &[usize],
        arch: &AutoencoderArch,
        identity: bool,
        seed: u64,
    ) -> Result<Self> {
        let bundle_in = arch.input_shape();
        let pre = match (arch.kind(), identity) {
            (BundleKind::Visual, true) => {
                if in_shape != bundle_in.as_slice() {
                    return Err(build_err(
                        &format!("{name}.pre"),
                        format!("identity adapter needs block input {in_shape:?} to equal bundle input {bundle_in:?}"),
                    ));
                }
                PreAdapter::Identity
            }
            (BundleKind::Visual, false) => visual_pre(store, &format!("{name}.pre"), in_shape, &bundle_in, seed)?,
            (BundleKind::Textual, true) => {
                return Err(build_err(&format!("{name}.pre"), "textual blocks always quantize; no identity adapter"))
            }
            (BundleKind::Textual, false) => {
                if in_shape.len() != 2 || in_shape[0] != bundle_in[0] {
                    return Err(build_err(
                        &format!("{name}.pre"),
                        format!("block input {in_shape:?} does not match bundle sequence length {}", bundle_in[0]),
                    ));
                }
                let v = arch.vocab().expect("textual bundles have a vocabulary");
                let w = crate::init::fan_in(&[in_shape[1], v], in_shape[1], seed, &format!("{name}.pre.proj.w"));
                PreAdapter::Quantize {
                    proj: Dense::fixed(store, &format!("{name}.pre.proj"), w, true)?,
                }
            }
        };

        let source_shape = match connection {
            Connection::Sleep => vec![arch.latent_dim()],
            Connection::Dream => arch.reconstruction_shape(),
        };
        let post_name = format!("{name}.post");
        let post = if identity {
            if numel(&source_shape) != numel(out_shape) {
                return Err(build_err(
                    &post_name,
                    format!("identity adapter cannot map {source_shape:?} onto {out_shape:?}"),
                ));
            }
            PostAdapter::Identity
        } else {
            match (connection, arch.kind()) {
                (Connection::Sleep, _) => PostAdapter::Dense {
                    dense: Dense::new(store, &post_name, source_shape[0], numel(out_shape), seed)?,
                },
                (Connection::Dream, BundleKind::Visual) => visual_post(store, &post_name, &source_shape, out_shape, seed)?,
                (Connection::Dream, BundleKind::Textual) => {
                    if out_shape.len() != 2 || out_shape[0] != source_shape[0] {
                        return Err(build_err(
                            &post_name,
                            format!("reconstruction {source_shape:?} does not align with block output {out_shape:?}"),
                        ));
                    }
                    PostAdapter::TimeDense {
                        dense: Dense::new(store, &post_name, source_shape[1], out_shape[1], seed)?,
                    }
                }
            }
        };
        Ok(Adapter {
            pre,
            post,
            in_shape: in_shape.to_vec(),
            out_shape: out_shape.to_vec(),
            source_shape,
        })
    }

    pub fn apply_pre(&self, g: &mut Graph, p: &impl Params, h: Var) -> Result<AdaptedInput> {
        check_batch(g, h, &self.in_shape, "pre-adapter")?;
        Ok(match &self.pre {
            PreAdapter::Identity => AdaptedInput::Image(h),
            PreAdapter::Visual { deconv, crop, .. } => {
                let up = deconv.forward(g, p, h)?;
                AdaptedInput::Image(crop.forward(g, p, up)?)
            }
            PreAdapter::Quantize { proj } => {
                let w = &p.store(proj.w).get(proj.w).value;
                AdaptedInput::Tokens(quantize_sequence(g.value(h), w)?)
            }
        })
    }

    pub fn apply_post(&self, g: &mut Graph, p: &impl Params, x: Var) -> Result<Var> {
        let b = check_batch(g, x, &self.source_shape, "post-adapter")?;
        let target = batched(b, &self.out_shape);
        match &self.post {
            PostAdapter::Identity => g.reshape(x, &target),
            PostAdapter::Dense { dense } => {
                let flat = g.reshape(x, &[b, dense.input])?;
                let y = dense.forward(g, p, flat)?;
                g.reshape(y, &target)
            }
            PostAdapter::Conv { conv, proj } => {
                let y = conv.forward(g, p, x)?;
                proj.forward(g, p, y)
            }
            PostAdapter::TimeDense { dense } => dense.forward_seq(g, p, x),
        }
    }

    pub fn pre_specs(&self) -> Vec<LayerSpec> {
        match &self.pre {
            PreAdapter::Identity => Vec::new(),
            PreAdapter::Visual { deconv, crop, up_shape } => vec![
                deconv.spec(&self.in_shape).expect("checked at build"),
                crop.spec(up_shape).expect("checked at build"),
            ],
            PreAdapter::Quantize { proj } => {
                let elems = self.in_shape[0] * proj.output;
                vec![
                    proj.spec(self.in_shape[0]),
                    LayerSpec::Elementwise {
                        op: Elementwise::Softmax,
                        elems,
                    },
                    LayerSpec::Elementwise {
                        op: Elementwise::Argmax,
                        elems,
                    },
                ]
            }
        }
    }

    pub fn post_specs(&self) -> Vec<LayerSpec> {
        match &self.post {
            PostAdapter::Identity => Vec::new(),
            PostAdapter::Dense { dense } => vec![dense.spec(1)],
            PostAdapter::Conv { conv, proj } => {
                let mid = conv.out_shape(&self.source_shape).expect("checked at build");
                vec![
                    conv.spec(&self.source_shape).expect("checked at build"),
                    proj.spec(&mid).expect("checked at build"),
                ]
            }
            PostAdapter::TimeDense { dense } => vec![dense.spec(self.source_shape[0])],
        }
    }
}

fn visual_pre(store: &mut ParamStore, name: &str, from: &[usize], to: &[usize], seed: u64) -> Result<PreAdapter> {
    if from.len() != 3 || to.len() != 3 {
        return Err(build_err(name, format!("cannot adapt {from:?} to {to:?}")));
    }
    let s = to[1].div_ceil(from[1]).max(to[2].div_ceil(from[2])).max(1);
    let (kh, kw) = (from[1] * s + 1 - to[1], from[2] * s + 1 - to[2]);
    if kh != kw {
        return Err(build_err(
            name,
            format!("upscaling {from:?} by {s} needs a non-square {kh}×{kw} crop to reach {to:?}"),
        ));
    }
    let deconv = Deconv::new(store, &format!("{name}.deconv"), from[0], to[0], s, s, 0, seed)?;
    let up_shape = deconv.out_shape(from)?;
    let crop = Conv::new(store, &format!("{name}.crop"), to[0], to[0], kh, 1, 0, seed)?;
    debug_assert_eq!(crop.out_shape(&up_shape)?, to);
    Ok(PreAdapter::Visual { deconv, crop, up_shape })
}

fn visual_post(store: &mut ParamStore, name: &str, from: &[usize], to: &[usize], seed: u64) -> Result<PostAdapter> {
    if from.len() != 3 || to.len() != 3 {
        return Err(build_err(name, format!("cannot adapt {from:?} to {to:?}")));
    }
    let d = (from[1] / to[1]).max(1);
    let k = (from[1] + d).checked_sub(d * to[1]);
    let kw = (from[2] + d).checked_sub(d * to[2]);
    match (k, kw) {
        (Some(k), Some(kw)) if k == kw && k >= 1 => {
            let conv = Conv::new(store, &format!("{name}.conv"), from[0], to[0], k, d, 0, seed)?;
            let proj = Conv::new(store, &format!("{name}.proj"), to[0], to[0], 1, 1, 0, seed)?;
            Ok(PostAdapter::Conv { conv, proj })
        }
        _ => Err(build_err(
            name,
            format!("no strided square conv maps reconstruction {from:?} onto {to:?}"),
        )),
    }
}

/// Intermediate values of one sleep or dream block.
#[derive(Clone, Debug)]
pub struct BlockTrace {
    pub input: Var,
    pub chain: Var,
    pub adapted: AdaptedInput,
    /// Latent for a sleep block, reconstruction (the dream) for a dream block.
    pub bundle_out: Var,
    pub bridged: Var,
    pub out: Var,
}

#[derive(Clone, Debug)]
struct Bridge {
    chain: ChainBlock,
    adapter: Adapter,
}

impl Bridge {
    fn build(
        store: &mut ParamStore,
        name: &str,
        connection: Connection,
        chain: ChainBlock,
        arch: &AutoencoderArch,
        identity: bool,
        seed: u64,
    ) -> Result<Self> {
        let adapter = Adapter::build(store, name, connection, chain.in_shape(), chain.out_shape(), arch, identity, seed)?;
        Ok(Bridge { chain, adapter })
    }

    fn forward(
        &self,
        g: &mut Graph,
        p: &impl Params,
        bundle: &AutoencoderBundle,
        connection: Connection,
        h: Var,
    ) -> Result<BlockTrace> {
        let chain = self.chain.forward(g, p, h)?;
        let adapted = self.adapter.apply_pre(g, p, h)?;
        let bundle_out = match connection {
            Connection::Sleep => bundle.encode_in(g, p, adapted.as_bundle_input())?,
            Connection::Dream => bundle.reconstruct_in(g, p, adapted.as_bundle_input())?,
        };
        let bridged = self.adapter.apply_post(g, p, bundle_out)?;
        let out = g.add(chain, bridged)?;
        Ok(BlockTrace {
            input: h,
            chain,
            adapted,
            bundle_out,
            bridged,
            out,
        })
    }

    fn specs(&self, bundle: &AutoencoderBundle, connection: Connection) -> BlockSpecs {
        let mut own = self.chain.specs();
        own.extend(self.adapter.pre_specs());
        own.extend(self.adapter.post_specs());
        let mut bundle_specs = bundle.encode_specs();
        if connection == Connection::Dream {
            bundle_specs.extend(bundle.decode_specs());
        }
        own.push(LayerSpec::Elementwise {
            op: Elementwise::Add,
            elems: numel(self.chain.out_shape()),
        });
        BlockSpecs {
            own,
            shared: bundle_specs,
        }
    }
}

/// Layer applications of a block, split into the block's own layers and
/// the shared bundle layers it calls.
#[derive(Clone, Debug, Default)]
pub struct BlockSpecs {
    pub own: Vec<LayerSpec>,
    pub shared: Vec<LayerSpec>,
}

/// `s = g(h) + post(φ(pre(h)))`.
#[derive(Clone, Debug)]
pub struct SleepBlock(Bridge);

impl SleepBlock {
    pub fn build(
        store: &mut ParamStore,
        name: &str,
        chain: ChainBlock,
        arch: &AutoencoderArch,
        identity: bool,
        seed: u64,
    ) -> Result<Self> {
        Bridge::build(store, name, Connection::Sleep, chain, arch, identity, seed).map(SleepBlock)
    }

    pub fn chain(&self) -> &ChainBlock {
        &self.0.chain
    }

    pub fn adapter(&self) -> &Adapter {
        &self.0.adapter
    }

    pub fn forward(&self, g: &mut Graph, p: &impl Params, bundle: &AutoencoderBundle, h: Var) -> Result<Var> {
        Ok(self.trace(g, p, bundle, h)?.out)
    }

    pub fn trace(&self, g: &mut Graph, p: &impl Params, bundle: &AutoencoderBundle, h: Var) -> Result<BlockTrace> {
        self.0.forward(g, p, bundle, Connection::Sleep, h)
    }

    pub fn specs(&self, bundle: &AutoencoderBundle) -> BlockSpecs {
        self.0.specs(bundle, Connection::Sleep)
    }
}

/// `s = g(h) + post(θ(φ(pre(h))))`, with `θ(φ(pre(h)))` tapped as the dream.
#[derive(Clone, Debug)]
pub struct DreamBlock(Bridge);

impl DreamBlock {
    pub fn build(
        store: &mut ParamStore,
        name: &str,
        chain: ChainBlock,
        arch: &AutoencoderArch,
        identity: bool,
        seed: u64,
    ) -> Result<Self> {
        Bridge::build(store, name, Connection::Dream, chain, arch, identity, seed).map(DreamBlock)
    }

    pub fn chain(&self) -> &ChainBlock {
        &self.0.chain
    }

    pub fn adapter(&self) -> &Adapter {
        &self.0.adapter
    }

    /// Returns `(out, dream)`.
    pub fn forward(&self, g: &mut Graph, p: &impl Params, bundle: &AutoencoderBundle, h: Var) -> Result<(Var, Var)> {
        let t = self.trace(g, p, bundle, h)?;
        Ok((t.out, t.bundle_out))
    }

    pub fn trace(&self, g: &mut Graph, p: &impl Params, bundle: &AutoencoderBundle, h: Var) -> Result<BlockTrace> {
        self.0.forward(g, p, bundle, Connection::Dream, h)
    }

    pub fn specs(&self, bundle: &AutoencoderBundle) -> BlockSpecs {
        self.0.specs(bundle, Connection::Dream)
    }
}

#[derive(Clone, Debug)]
enum BranchKind {
    Visual { layers: Vec<ConvLayer>, window: usize },
    Textual { lstms: Vec<Lstm> },
}

/// The parallel branch that refines every dream with shared weights, pools
/// each to a vector and sums the vectors.
#[derive(Clone, Debug)]
pub struct DreamBranch {
    kind: BranchKind,
    in_shape: Vec<usize>,
    width: usize,
    out_width: usize,
}

impl DreamBranch {
    /// First conv has kernel `stride + 2`, padding 1 and the given stride;
    /// the rest are 3×3 same-size convs. Each is followed by norm and relu,
    /// then average pooling down to a `grid×grid` map.
    #[allow(clippy::too_many_arguments)]
    pub fn visual(
        store: &mut ParamStore,
        name: &str,
        in_shape: &[usize],
        width: usize,
        depth: usize,
        stride: usize,
        grid: usize,
        seed: u64,
    ) -> Result<Self> {
        if in_shape.len() != 3 || width == 0 || depth == 0 || stride == 0 || grid == 0 {
            return Err(build_err(name, format!("invalid visual branch over {in_shape:?}")));
        }
        let mut shape = in_shape.to_vec();
        let mut layers = Vec::with_capacity(depth);
        for l in 1..=depth {
            let (k, s) = if l == 1 { (stride + 2, stride) } else { (3, 1) };
            let conv = Conv::new(store, &format!("{name}.conv{l}"), shape[0], width, k, s, 1, seed)?;
            let next = conv.out_shape(&shape).map_err(|e| build_err(name, e.to_string()))?;
            let norm = Norm::new(store, &format!("{name}.norm{l}"), &next)?;
            layers.push(ConvLayer {
                conv,
                norm: Some(norm),
                in_shape: shape,
                out_shape: next.clone(),
            });
            shape = next;
        }
        if shape[1] % grid != 0 || shape[2] % grid != 0 || shape[1] != shape[2] {
            return Err(build_err(name, format!("branch map {shape:?} does not pool onto a {grid}×{grid} grid")));
        }
        Ok(DreamBranch {
            kind: BranchKind::Visual {
                layers,
                window: shape[1] / grid,
            },
            in_shape: in_shape.to_vec(),
            width,
            out_width: width * grid * grid,
        })
    }

    /// Stacked LSTMs, then the mean over time.
    pub fn textual(
        store: &mut ParamStore,
        name: &str,
        in_shape: &[usize],
        width: usize,
        depth: usize,
        seed: u64,
    ) -> Result<Self> {
        if in_shape.len() != 2 || width == 0 || depth == 0 {
            return Err(build_err(name, format!("invalid textual branch over {in_shape:?}")));
        }
        let mut lstms = Vec::with_capacity(depth);
        let mut x = in_shape[1];
        for l in 1..=depth {
            lstms.push(Lstm::new(store, &format!("{name}.lstm{l}"), x, width, seed)?);
            x = width;
        }
        Ok(DreamBranch {
            kind: BranchKind::Textual { lstms },
            in_shape: in_shape.to_vec(),
            width,
            out_width: width,
        })
    }

    pub fn in_shape(&self) -> &[usize] {
        &self.in_shape
    }

    pub fn out_width(&self) -> usize {
        self.out_width
    }

    fn refine(&self, g: &mut Graph, p: &impl Params, dream: Var) -> Result<Var> {
        let b = check_batch(g, dream, &self.in_shape, "dream branch")?;
        match &self.kind {
            BranchKind::Visual { layers, window } => {
                let mut x = dream;
                for layer in layers {
                    x = layer.conv.forward(g, p, x)?;
                    if let Some(norm) = &layer.norm {
                        x = norm.forward(g, p, x)?;
                    }
                    x = g.relu(x);
                }
                let pooled = g.avg_pool2d(x, *window)?;
                g.reshape(pooled, &[b, self.out_width])
            }
            BranchKind::Textual { lstms } => {
                let mut x = dream;
                for lstm in lstms {
                    x = lstm.forward(g, p, x)?.0;
                }
                g.mean_axis(x, 1)
            }
        }
    }

    /// `Σ_m refine(dream_m)`, shape `B×out_width`.
    pub fn forward(&self, g: &mut Graph, p: &impl Params, dreams: &[Var]) -> Result<Var> {
        let Some((&first, rest)) = dreams.split_first() else {
            return Err(build_err("dream branch", "no dream taps to consume"));
        };
        let mut acc = self.refine(g, p, first)?;
        for &d in rest {
            let r = self.refine(g, p, d)?;
            acc = g.add(acc, r)?;
        }
        Ok(acc)
    }

    /// Layer applications for `taps` dreams; the sum adds `taps − 1` vector additions.
    pub fn specs(&self, taps: usize) -> Vec<LayerSpec> {
        let mut one = Vec::new();
        match &self.kind {
            BranchKind::Visual { layers, .. } => {
                for layer in layers {
                    let elems = numel(&layer.out_shape);
                    one.push(layer.conv.spec(&layer.in_shape).expect("checked at build"));
                    if let Some(norm) = &layer.norm {
                        one.push(norm.spec(elems));
                    }
                    one.push(relu_spec(elems));
                }
                let last = &layers.last().expect("depth ≥ 1").out_shape;
                one.push(LayerSpec::Elementwise {
                    op: Elementwise::Pool,
                    elems: numel(last),
                });
            }
            BranchKind::Textual { lstms } => {
                let t = self.in_shape[0];
                one.extend(lstms.iter().map(|l| l.spec(t)));
                one.push(LayerSpec::Elementwise {
                    op: Elementwise::Pool,
                    elems: t * self.width,
                });
            }
        }
        let mut out = Vec::new();
        for _ in 0..taps {
            out.extend(one.iter().cloned());
        }
        if taps > 1 {
            out.push(LayerSpec::Elementwise {
                op: Elementwise::Add,
                elems: (taps - 1) * self.out_width,
            });
        }
        out
    }

    /// The branch's parameters, counted once however many taps it serves.
    pub fn param_count(&self) -> u64 {
        self.specs(1).iter().map(LayerSpec::params).sum()
    }
}
