//! Whole classifiers: a stem, `M` chain/sleep/dream blocks, an optional
//! dream branch and a dense head over `k` classes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::autoencoder::{AutoencoderArch, AutoencoderBundle, BundleKind, TrainManifest};
use crate::blocks::{BlockTrace, ChainBlock, DreamBlock, DreamBranch, SleepBlock};
use crate::cost::{CostEntry, CostReport, Elementwise, LayerSpec};
use crate::data::Samples;
use crate::error::{Error, Result};
use crate::gradcheck::ParamSource;
use crate::layers::{Conv, Dense, Embedding, Norm, Params, Stores};
use crate::param::{ParamStore, StoreTag};
use crate::tensor::{numel, IdTensor, Tensor};
use crate::weights::WeightFile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Visual,
    Textual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Chain,
    Sleep,
    Dream,
}

/// How the dream branch joins the main path at the head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Merge {
    Concat,
    Add,
}

/// Architecture of a classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub task: Task,
    pub variant: Variant,
    /// Number of blocks, `M`.
    pub blocks: usize,
    pub classes: usize,
    /// Block widths (channels or LSTM hidden size). Empty means the task
    /// default for every block; a single entry applies to every block.
    pub widths: Vec<usize>,
    /// Conv layers per visual chain block.
    pub layers_per_block: usize,
    pub kernel: usize,
    pub norm: bool,
    /// `[C, H, W]` of visual inputs.
    pub image_shape: Vec<usize>,
    pub stem_channels: usize,
    pub stem_stride: usize,
    pub vocab: usize,
    pub seq_len: usize,
    pub embed_dim: usize,
    /// Visual head pools the last block onto a `head_grid × head_grid` map.
    pub head_grid: usize,
    pub branch_width: usize,
    pub branch_depth: usize,
    pub branch_stride: usize,
    pub branch_grid: usize,
    pub merge: Merge,
    /// Use reshape-only adapters; the block shapes must already match the bundle.
    pub identity_adapters: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            task: Task::Visual,
            variant: Variant::Sleep,
            blocks: 2,
            classes: 4,
            widths: Vec::new(),
            layers_per_block: 1,
            kernel: 3,
            norm: true,
            image_shape: vec![1, 32, 32],
            stem_channels: 8,
            stem_stride: 2,
            vocab: 2000,
            seq_len: 32,
            embed_dim: 32,
            head_grid: 4,
            branch_width: 8,
            branch_depth: 2,
            branch_stride: 2,
            branch_grid: 4,
            merge: Merge::Concat,
            identity_adapters: false,
        }
    }
}

impl ModelConfig {
    pub fn default_width(&self) -> usize {
        match self.task {
            Task::Visual => 8,
            Task::Textual => 64,
        }
    }

    pub fn block_widths(&self) -> Result<Vec<usize>> {
        let m = self.blocks;
        let w = match self.widths.len() {
            0 => vec![self.default_width(); m],
            1 => vec![self.widths[0]; m],
            n if n == m => self.widths.clone(),
            n => return Err(Error::Config(format!("{n} widths given for {m} blocks"))),
        };
        if w.contains(&0) {
            return Err(Error::Config("block widths must be positive".into()));
        }
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |r: &str| Err(Error::Config(r.into()));
        if self.blocks == 0 {
            return bad("model.blocks must be at least 1");
        }
        if self.classes == 0 {
            return bad("model.classes must be at least 1");
        }
        self.block_widths()?;
        match self.task {
            Task::Visual => {
                if self.image_shape.len() != 3 || self.image_shape.contains(&0) {
                    return bad("model.image_shape must be three positive sizes [C, H, W]");
                }
                if [self.layers_per_block, self.kernel, self.stem_channels, self.stem_stride, self.head_grid]
                    .contains(&0)
                {
                    return bad("visual sizes must be positive");
                }
            }
            Task::Textual => {
                if [self.vocab, self.seq_len, self.embed_dim].contains(&0) {
                    return bad("model.vocab, model.seq_len and model.embed_dim must be positive");
                }
            }
        }
        if self.variant == Variant::Dream && [self.branch_width, self.branch_depth].contains(&0) {
            return bad("dream branch sizes must be positive");
        }
        Ok(())
    }

    /// Non-fatal remarks about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.blocks > 4 {
            w.push(format!("{} blocks is beyond the studied range of 1 to 4", self.blocks));
        }
        w
    }

    pub fn model_id(&self) -> String {
        let name = match self.variant {
            Variant::Chain => "Chain",
            Variant::Sleep => "SleepNet",
            Variant::Dream => "DreamNet",
        };
        format!("{name}-{}", self.blocks)
    }

    /// Per-sample input shape: `[C, H, W]` or `[T]`.
    pub fn input_shape(&self) -> Vec<usize> {
        match self.task {
            Task::Visual => self.image_shape.clone(),
            Task::Textual => vec![self.seq_len],
        }
    }
}

/// Batch fed to a model.
#[derive(Clone, Copy, Debug)]
pub enum ModelInput<'a> {
    /// `B×C×H×W`
    Images(Var),
    /// `B×T`
    Tokens(&'a IdTensor),
}

#[derive(Clone, Debug)]
enum Stem {
    Visual {
        conv: Conv,
        norm: Option<Norm>,
        in_shape: Vec<usize>,
        out_shape: Vec<usize>,
    },
    Textual {
        embed: Embedding,
        seq_len: usize,
    },
}

#[derive(Clone, Debug)]
pub enum Block {
    Chain(ChainBlock),
    Sleep(SleepBlock),
    Dream(DreamBlock),
}

impl Block {
    pub fn chain(&self) -> &ChainBlock {
        match self {
            Block::Chain(c) => c,
            Block::Sleep(s) => s.chain(),
            Block::Dream(d) => d.chain(),
        }
    }
}

#[derive(Clone, Debug)]
struct Head {
    /// Pooling window for visual maps; `None` means mean over time.
    window: Option<usize>,
    main_shape: Vec<usize>,
    main_width: usize,
    dense: Dense,
}

/// One block's values during a forward pass.
#[derive(Clone, Debug)]
pub struct Step {
    pub input: Var,
    pub out: Var,
    /// Present for sleep and dream blocks.
    pub bridge: Option<BlockTrace>,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub stem: Var,
    pub steps: Vec<Step>,
    /// Reconstructions tapped from dream blocks, in block order.
    pub dreams: Vec<Var>,
    pub branch: Option<Var>,
    pub logits: Var,
}

/// An assembled classifier together with its own parameters and, for the
/// sleep and dream variants, the shared autoencoder bundle.
#[derive(Clone, Debug)]
pub struct BlockGraph {
    config: ModelConfig,
    seed: u64,
    store: ParamStore,
    bundle: Option<AutoencoderBundle>,
    stem: Stem,
    blocks: Vec<Block>,
    branch: Option<DreamBranch>,
    head: Head,
}

fn boundary_err(boundary: impl Into<String>, e: Error) -> Error {
    match e {
        Error::Build { .. } => e,
        other => Error::Build {
            boundary: boundary.into(),
            reason: other.to_string(),
        },
    }
}

impl BlockGraph {
    /// Builds and shape-checks the whole model. The bundle is required for
    /// the sleep and dream variants and rejected for chain-only models; it
    /// is installed frozen.
    pub fn build(config: &ModelConfig, bundle: Option<AutoencoderBundle>, seed: u64) -> Result<Self> {
        config.validate()?;
        let id = config.model_id();
        let mut bundle = match (config.variant, bundle) {
            (Variant::Chain, Some(_)) => {
                return Err(Error::Config(format!("{id} is chain-only and takes no autoencoder bundle")))
            }
            (Variant::Chain, None) => None,
            (_, None) => return Err(Error::MissingBundle(id)),
            (_, Some(b)) => Some(b),
        };
        if let Some(b) = &mut bundle {
            let want = match config.task {
                Task::Visual => BundleKind::Visual,
                Task::Textual => BundleKind::Textual,
            };
            if b.kind() != want {
                return Err(Error::Build {
                    boundary: "bundle".into(),
                    reason: format!("{:?} bundle cannot serve a {:?} model", b.kind(), config.task),
                });
            }
            b.set_frozen(true);
        }

        let mut store = ParamStore::new(StoreTag::Model);
        let stem = Self::build_stem(config, &mut store, seed)?;
        let mut shape = match &stem {
            Stem::Visual { out_shape, .. } => out_shape.clone(),
            Stem::Textual { seq_len, embed } => vec![*seq_len, embed.dim],
        };

        let arch: Option<AutoencoderArch> = bundle.as_ref().map(|b| b.arch().clone());
        let mut blocks = Vec::with_capacity(config.blocks);
        for (m, &width) in config.block_widths()?.iter().enumerate() {
            let name = format!("block{}", m + 1);
            let chain = match config.task {
                Task::Visual => ChainBlock::visual(
                    &mut store,
                    &name,
                    &shape,
                    width,
                    config.layers_per_block,
                    config.kernel,
                    config.norm,
                    seed,
                ),
                Task::Textual => ChainBlock::textual(&mut store, &name, &shape, width, seed),
            }
            .map_err(|e| boundary_err(&name, e))?;
            shape = chain.out_shape().to_vec();
            let block = match (config.variant, &arch) {
                (Variant::Chain, _) => Block::Chain(chain),
                (Variant::Sleep, Some(a)) => {
                    Block::Sleep(SleepBlock::build(&mut store, &name, chain, a, config.identity_adapters, seed)?)
                }
                (Variant::Dream, Some(a)) => {
                    Block::Dream(DreamBlock::build(&mut store, &name, chain, a, config.identity_adapters, seed)?)
                }
                _ => unreachable!("bundle presence checked above"),
            };
            blocks.push(block);
        }

        let branch = match (&arch, config.variant) {
            (Some(a), Variant::Dream) => {
                let tap = a.reconstruction_shape();
                let b = match config.task {
                    Task::Visual => DreamBranch::visual(
                        &mut store,
                        "branch",
                        &tap,
                        config.branch_width,
                        config.branch_depth,
                        config.branch_stride,
                        config.branch_grid,
                        seed,
                    ),
                    Task::Textual => {
                        DreamBranch::textual(&mut store, "branch", &tap, config.branch_width, config.branch_depth, seed)
                    }
                };
                Some(b.map_err(|e| boundary_err("branch", e))?)
            }
            _ => None,
        };

        let (window, main_width) = match config.task {
            Task::Visual => {
                let g = config.head_grid;
                if shape[1] % g != 0 || shape[2] % g != 0 || shape[1] != shape[2] {
                    return Err(Error::Build {
                        boundary: "head".into(),
                        reason: format!("last block output {shape:?} does not pool onto a {g}×{g} grid"),
                    });
                }
                (Some(shape[1] / g), shape[0] * g * g)
            }
            Task::Textual => (None, shape[1]),
        };
        let head_in = match (&branch, config.merge) {
            (None, _) => main_width,
            (Some(b), Merge::Concat) => main_width + b.out_width(),
            (Some(b), Merge::Add) => {
                if b.out_width() != main_width {
                    return Err(Error::Build {
                        boundary: "head".into(),
                        reason: format!(
                            "additive merge needs equal widths, main path {main_width} vs dream branch {}",
                            b.out_width()
                        ),
                    });
                }
                main_width
            }
        };
        let dense = Dense::new(&mut store, "head.dense", head_in, config.classes, seed)?;
        Ok(BlockGraph {
            config: config.clone(),
            seed,
            store,
            bundle,
            stem,
            blocks,
            branch,
            head: Head {
                window,
                main_shape: shape,
                main_width,
                dense,
            },
        })
    }

    fn build_stem(config: &ModelConfig, store: &mut ParamStore, seed: u64) -> Result<Stem> {
        match config.task {
            Task::Visual => {
                let s = config.stem_stride;
                let cin = config.image_shape[0];
                let conv = Conv::new(store, "stem.conv", cin, config.stem_channels, s + 2, s, 1, seed)?;
                let out_shape = conv.out_shape(&config.image_shape).map_err(|e| boundary_err("stem", e))?;
                let norm = if config.norm {
                    Some(Norm::new(store, "stem.norm", &out_shape)?)
                } else {
                    None
                };
                Ok(Stem::Visual {
                    conv,
                    norm,
                    in_shape: config.image_shape.clone(),
                    out_shape,
                })
            }
            Task::Textual => Ok(Stem::Textual {
                embed: Embedding::new(store, "stem.embed", config.vocab, config.embed_dim, seed)?,
                seq_len: config.seq_len,
            }),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn model_id(&self) -> String {
        self.config.model_id()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn branch(&self) -> Option<&DreamBranch> {
        self.branch.as_ref()
    }

    pub fn bundle(&self) -> Option<&AutoencoderBundle> {
        self.bundle.as_ref()
    }

    pub fn bundle_mut(&mut self) -> Option<&mut AutoencoderBundle> {
        self.bundle.as_mut()
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Model and bundle stores for resolving parameters in a forward pass.
    pub fn params(&self) -> Stores<'_> {
        Stores {
            model: &self.store,
            bundle: self.bundle.as_ref().map(AutoencoderBundle::store),
        }
    }

    /// Model store, then the bundle store when present.
    pub fn stores_mut(&mut self) -> Vec<&mut ParamStore> {
        let mut out = vec![&mut self.store];
        if let Some(b) = &mut self.bundle {
            out.push(b.store_mut());
        }
        out
    }

    /// Freezes or unfreezes the bundle. Stubs stay frozen.
    pub fn set_bundle_frozen(&mut self, frozen: bool) {
        if let Some(b) = &mut self.bundle {
            b.set_frozen(frozen);
        }
    }

    /// Statically inferred per-sample shapes: stem output, then each block's output.
    pub fn boundary_shapes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![match &self.stem {
            Stem::Visual { out_shape, .. } => out_shape.clone(),
            Stem::Textual { seq_len, embed } => vec![*seq_len, embed.dim],
        }];
        out.extend(self.blocks.iter().map(|b| b.chain().out_shape().to_vec()));
        out
    }

    pub fn forward(&self, g: &mut Graph, input: ModelInput) -> Result<Var> {
        Ok(self.trace(g, input)?.logits)
    }

    /// Forward pass over a batch of stored samples.
    pub fn forward_samples(&self, g: &mut Graph, samples: &Samples) -> Result<Var> {
        match samples {
            Samples::Images(x) => {
                let v = g.constant(x.clone());
                self.forward(g, ModelInput::Images(v))
            }
            Samples::Tokens(ids) => self.forward(g, ModelInput::Tokens(ids)),
        }
    }

    pub fn trace(&self, g: &mut Graph, input: ModelInput) -> Result<ForwardTrace> {
        self.trace_with(g, &self.params(), input)
    }

    /// Forward pass resolving parameters through `p`.
    pub fn trace_with(&self, g: &mut Graph, p: &impl Params, input: ModelInput) -> Result<ForwardTrace> {
        let stem = self.stem_forward(g, p, input)?;
        let mut h = stem;
        let mut steps = Vec::with_capacity(self.blocks.len());
        let mut dreams = Vec::new();
        for block in &self.blocks {
            let step = match block {
                Block::Chain(c) => Step {
                    input: h,
                    out: c.forward(g, p, h)?,
                    bridge: None,
                },
                Block::Sleep(s) => {
                    let t = s.trace(g, p, self.bundle.as_ref().expect("built with a bundle"), h)?;
                    Step {
                        input: h,
                        out: t.out,
                        bridge: Some(t),
                    }
                }
                Block::Dream(d) => {
                    let t = d.trace(g, p, self.bundle.as_ref().expect("built with a bundle"), h)?;
                    dreams.push(t.bundle_out);
                    Step {
                        input: h,
                        out: t.out,
                        bridge: Some(t),
                    }
                }
            };
            h = step.out;
            steps.push(step);
        }
        let b = g.shape(h)[0];
        let main = match self.head.window {
            Some(k) => {
                let pooled = g.avg_pool2d(h, k)?;
                g.reshape(pooled, &[b, self.head.main_width])?
            }
            None => g.mean_axis(h, 1)?,
        };
        let branch = match &self.branch {
            Some(br) => Some(br.forward(g, p, &dreams)?),
            None => None,
        };
        let head_in = match (branch, self.config.merge) {
            (None, _) => main,
            (Some(v), Merge::Concat) => g.concat(&[main, v], 1)?,
            (Some(v), Merge::Add) => g.add(main, v)?,
        };
        let logits = self.head.dense.forward(g, p, head_in)?;
        Ok(ForwardTrace {
            stem,
            steps,
            dreams,
            branch,
            logits,
        })
    }

    fn stem_forward(&self, g: &mut Graph, p: &impl Params, input: ModelInput) -> Result<Var> {
        let want = self.config.input_shape();
        match (&self.stem, input) {
            (Stem::Visual { conv, norm, in_shape, .. }, ModelInput::Images(x)) => {
                let s = g.shape(x);
                if s.len() != 4 || s[1..] != in_shape[..] {
                    return Err(Error::ShapeMismatch {
                        op: "model input",
                        left: s.to_vec(),
                        right: want,
                    });
                }
                let mut h = conv.forward(g, p, x)?;
                if let Some(n) = norm {
                    h = n.forward(g, p, h)?;
                }
                Ok(g.relu(h))
            }
            (Stem::Textual { embed, seq_len }, ModelInput::Tokens(ids)) => {
                if ids.shape().len() != 2 || ids.shape()[1] != *seq_len {
                    return Err(Error::ShapeMismatch {
                        op: "model input",
                        left: ids.shape().to_vec(),
                        right: want,
                    });
                }
                embed.forward(g, p, ids)
            }
            _ => Err(Error::Unsupported(format!(
                "{:?} model fed the wrong kind of input",
                self.config.task
            ))),
        }
    }

    fn stem_specs(&self) -> Vec<LayerSpec> {
        match &self.stem {
            Stem::Visual { conv, norm, in_shape, out_shape } => {
                let elems = numel(out_shape);
                let mut v = vec![conv.spec(in_shape).expect("checked at build")];
                if let Some(n) = norm {
                    v.push(n.spec(elems));
                }
                v.push(LayerSpec::Elementwise {
                    op: Elementwise::Relu,
                    elems,
                });
                v
            }
            Stem::Textual { embed, .. } => vec![embed.spec()],
        }
    }

    fn head_specs(&self) -> Vec<LayerSpec> {
        let mut v = vec![LayerSpec::Elementwise {
            op: Elementwise::Pool,
            elems: numel(&self.head.main_shape),
        }];
        if self.branch.is_some() && self.config.merge == Merge::Add {
            v.push(LayerSpec::Elementwise {
                op: Elementwise::Add,
                elems: self.head.main_width,
            });
        }
        v.push(self.head.dense.spec(1));
        v
    }

    /// Parameter and FLOP accounting. A block's FLOPs include the bundle
    /// layers it calls; the bundle's parameters appear once, under "bundle".
    pub fn cost_report(&self) -> CostReport {
        let mut entries = vec![CostEntry::from_layers("stem", &self.stem_specs())];
        for (m, block) in self.blocks.iter().enumerate() {
            let name = format!("block{}", m + 1);
            let (own, shared) = match (block, &self.bundle) {
                (Block::Chain(c), _) => (c.specs(), Vec::new()),
                (Block::Sleep(s), Some(b)) => {
                    let s = s.specs(b);
                    (s.own, s.shared)
                }
                (Block::Dream(d), Some(b)) => {
                    let s = d.specs(b);
                    (s.own, s.shared)
                }
                _ => unreachable!("built with a bundle"),
            };
            let mut entry = CostEntry::from_layers(name, &own);
            entry.flops += shared.iter().map(LayerSpec::flops).sum::<u64>();
            entries.push(entry);
        }
        if let Some(br) = &self.branch {
            let mut entry = CostEntry::from_layers("branch", &br.specs(self.blocks.len()));
            entry.params = br.param_count();
            entries.push(entry);
        }
        entries.push(CostEntry::from_layers("head", &self.head_specs()));
        if let Some(b) = &self.bundle {
            entries.push(CostEntry {
                name: "bundle".into(),
                params: b.store().numel() as u64,
                flops: 0,
            });
        }
        let frozen = self
            .stores()
            .iter()
            .flat_map(|s| s.iter())
            .filter(|p| !p.trainable)
            .map(|p| p.numel() as u64)
            .sum();
        CostReport::new(self.model_id(), entries, frozen)
    }

    pub fn count_params(&self) -> CostReport {
        self.cost_report()
    }

    /// FLOPs per forward pass of one sample of `input_shape`.
    pub fn count_flops(&self, input_shape: &[usize]) -> Result<CostReport> {
        let want = self.config.input_shape();
        if input_shape != want.as_slice() {
            return Err(Error::ShapeMismatch {
                op: "count_flops",
                left: input_shape.to_vec(),
                right: want,
            });
        }
        Ok(self.cost_report())
    }

    pub fn to_weight_file(&self) -> WeightFile {
        let header = ModelHeader {
            format: MODEL_FORMAT.into(),
            config: self.config.clone(),
            seed: self.seed,
            bundle: self.bundle.as_ref().map(|b| BundleHeader {
                arch: b.arch().clone(),
                manifest: b.manifest.clone(),
                frozen: b.store().iter().all(|p| !p.trainable),
            }),
        };
        let mut params: Vec<(String, Tensor)> =
            self.store.iter().map(|p| (format!("model/{}", p.name), p.value.clone())).collect();
        if let Some(b) = &self.bundle {
            params.extend(b.store().iter().map(|p| (format!("bundle/{}", p.name), p.value.clone())));
        }
        WeightFile {
            manifest: serde_json::to_string(&header).expect("header serializes"),
            params,
        }
    }

    pub fn from_weight_file(file: &WeightFile) -> Result<Self> {
        let header: ModelHeader = file.header(MODEL_FORMAT, "a model")?;
        let mut model_params = Vec::new();
        let mut bundle_params = Vec::new();
        for (name, t) in &file.params {
            if let Some(n) = name.strip_prefix("model/") {
                model_params.push((n.to_string(), t.clone()));
            } else if let Some(n) = name.strip_prefix("bundle/") {
                bundle_params.push((n.to_string(), t.clone()));
            } else {
                return Err(Error::UnknownParameter(name.clone()));
            }
        }
        let (bundle, frozen) = match header.bundle {
            Some(h) => (
                Some(AutoencoderBundle::from_parts(h.arch, h.manifest, &bundle_params)?),
                h.frozen,
            ),
            None if bundle_params.is_empty() => (None, true),
            None => return Err(Error::UnknownParameter(bundle_params[0].0.clone())),
        };
        let mut model = BlockGraph::build(&header.config, bundle, header.seed)?;
        model.set_bundle_frozen(frozen);
        crate::autoencoder::load_params(&mut model.store, &model_params)?;
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_weight_file().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_weight_file(&WeightFile::from_bytes(bytes)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_weight_file().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_weight_file(&WeightFile::load(path)?)
    }
}

impl ParamSource for BlockGraph {
    fn stores(&self) -> Vec<&ParamStore> {
        let mut v = vec![&self.store];
        if let Some(b) = &self.bundle {
            v.push(b.store());
        }
        v
    }

    fn stores_mut(&mut self) -> Vec<&mut ParamStore> {
        let mut v = vec![&mut self.store];
        if let Some(b) = &mut self.bundle {
            v.push(b.store_mut());
        }
        v
    }
}

const MODEL_FORMAT: &str = "block-graph";

#[derive(Serialize, Deserialize)]
struct BundleHeader {
    arch: AutoencoderArch,
    manifest: TrainManifest,
    frozen: bool,
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    config: ModelConfig,
    seed: u64,
    bundle: Option<BundleHeader>,
}
