//! Self-supervised autoencoder bundles: an encoder φ and a decoder θ with
//! their own parameter store, training record and on-disk form.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::cost::{Elementwise, LayerSpec};
use crate::data::Samples;
use crate::error::{Error, Result};
use crate::init;
use crate::layers::{Conv, Deconv, Dense, Embedding, Lstm, Params};
use crate::optim::{adam_step, OptimizerConfig};
use crate::param::{ParamStore, StoreTag};
use crate::tensor::{numel, IdTensor, Tensor};
use crate::weights::WeightFile;
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleKind {
    Visual,
    Textual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StubKind {
    Zero,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum AutoencoderArch {
    /// Two stride-2 convs → dense latent → dense → two stride-2 deconvs.
    /// `input_shape` is `[C, H, W]` with H and W divisible by 4.
    VisualConv {
        input_shape: Vec<usize>,
        channels: [usize; 2],
        latent_dim: usize,
    },
    /// Embedding → LSTM → dense latent; the decoder LSTM reads the latent
    /// at every step and projects to embedding width, then to vocabulary logits.
    TextualLstm {
        vocab: usize,
        seq_len: usize,
        embed_dim: usize,
        hidden: usize,
        latent_dim: usize,
    },
    VisualStub {
        stub: StubKind,
        input_shape: Vec<usize>,
        latent_dim: usize,
    },
    TextualStub {
        stub: StubKind,
        vocab: usize,
        seq_len: usize,
        embed_dim: usize,
        latent_dim: usize,
    },
}

impl AutoencoderArch {
    pub fn kind(&self) -> BundleKind {
        match self {
            AutoencoderArch::VisualConv { .. } | AutoencoderArch::VisualStub { .. } => BundleKind::Visual,
            _ => BundleKind::Textual,
        }
    }

    pub fn is_stub(&self) -> bool {
        matches!(self, AutoencoderArch::VisualStub { .. } | AutoencoderArch::TextualStub { .. })
    }

    pub fn latent_dim(&self) -> usize {
        match *self {
            AutoencoderArch::VisualConv { latent_dim, .. }
            | AutoencoderArch::TextualLstm { latent_dim, .. }
            | AutoencoderArch::VisualStub { latent_dim, .. }
            | AutoencoderArch::TextualStub { latent_dim, .. } => latent_dim,
        }
    }

    /// Per-sample input shape: `[C, H, W]` or `[T]`.
    pub fn input_shape(&self) -> Vec<usize> {
        match self {
            AutoencoderArch::VisualConv { input_shape, .. } | AutoencoderArch::VisualStub { input_shape, .. } => {
                input_shape.clone()
            }
            AutoencoderArch::TextualLstm { seq_len, .. } | AutoencoderArch::TextualStub { seq_len, .. } => {
                vec![*seq_len]
            }
        }
    }

    /// Per-sample shape of `reconstruct`: the input shape for images,
    /// `[T, E]` for text.
    pub fn reconstruction_shape(&self) -> Vec<usize> {
        match *self {
            AutoencoderArch::TextualLstm { seq_len, embed_dim, .. }
            | AutoencoderArch::TextualStub { seq_len, embed_dim, .. } => vec![seq_len, embed_dim],
            _ => self.input_shape(),
        }
    }

    pub fn vocab(&self) -> Option<usize> {
        match *self {
            AutoencoderArch::TextualLstm { vocab, .. } | AutoencoderArch::TextualStub { vocab, .. } => Some(vocab),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |r: String| Err(Error::Config(format!("autoencoder: {r}")));
        match self {
            AutoencoderArch::VisualConv { input_shape, channels, latent_dim } => {
                if input_shape.len() != 3 || input_shape.contains(&0) {
                    return bad(format!("visual input must be [C, H, W], got {input_shape:?}"));
                }
                if input_shape[1] % 4 != 0 || input_shape[2] % 4 != 0 {
                    return bad(format!("visual input {input_shape:?} must have H and W divisible by 4"));
                }
                if channels.contains(&0) || *latent_dim == 0 {
                    return bad("channels and latent_dim must be positive".into());
                }
            }
            AutoencoderArch::TextualLstm { vocab, seq_len, embed_dim, hidden, latent_dim } => {
                if [*vocab, *seq_len, *embed_dim, *hidden, *latent_dim].contains(&0) {
                    return bad("textual sizes must be positive".into());
                }
            }
            AutoencoderArch::VisualStub { stub, input_shape, latent_dim } => {
                if input_shape.is_empty() || input_shape.contains(&0) || *latent_dim == 0 {
                    return Err(Error::Stub(format!("invalid stub shape {input_shape:?} / {latent_dim}")));
                }
                if *stub == StubKind::Identity && *latent_dim != numel(input_shape) {
                    return Err(Error::Stub(format!(
                        "identity stub needs latent_dim = {} for input {input_shape:?}, got {latent_dim}",
                        numel(input_shape)
                    )));
                }
            }
            AutoencoderArch::TextualStub { stub, vocab, seq_len, embed_dim, latent_dim } => {
                if *stub == StubKind::Identity {
                    return Err(Error::Stub(
                        "identity stubs exist only for image inputs: token ids cannot equal an embedding-width reconstruction".into(),
                    ));
                }
                if [*vocab, *seq_len, *embed_dim, *latent_dim].contains(&0) {
                    return Err(Error::Stub("textual stub sizes must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Net {
    Visual {
        conv1: Conv,
        conv2: Conv,
        to_latent: Dense,
        from_latent: Dense,
        deconv1: Deconv,
        deconv2: Deconv,
        mid: Vec<usize>,
    },
    Textual {
        embed: Embedding,
        enc_lstm: Lstm,
        to_latent: Dense,
        dec_lstm: Lstm,
        to_embed: Dense,
        to_vocab: Dense,
    },
    Stub {
        enc: Dense,
        dec: Dense,
    },
    TextStub {
        embed: Embedding,
        dec: Dense,
    },
}

fn build_net(arch: &AutoencoderArch, store: &mut ParamStore, seed: u64) -> Result<Net> {
    arch.validate()?;
    Ok(match arch {
        AutoencoderArch::VisualConv { input_shape, channels, latent_dim } => {
            let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
            let conv1 = Conv::new(store, "enc.conv1", c, channels[0], 4, 2, 1, seed)?;
            let conv2 = Conv::new(store, "enc.conv2", channels[0], channels[1], 4, 2, 1, seed)?;
            let mid = vec![channels[1], h / 4, w / 4];
            let flat = numel(&mid);
            let to_latent = Dense::new(store, "enc.latent", flat, *latent_dim, seed)?;
            let from_latent = Dense::new(store, "dec.dense", *latent_dim, flat, seed)?;
            let deconv1 = Deconv::new(store, "dec.deconv1", channels[1], channels[0], 2, 2, 0, seed)?;
            let deconv2 = Deconv::new(store, "dec.deconv2", channels[0], c, 2, 2, 0, seed)?;
            Net::Visual { conv1, conv2, to_latent, from_latent, deconv1, deconv2, mid }
        }
        AutoencoderArch::TextualLstm { vocab, embed_dim, hidden, latent_dim, .. } => Net::Textual {
            embed: Embedding::new(store, "enc.embed", *vocab, *embed_dim, seed)?,
            enc_lstm: Lstm::new(store, "enc.lstm", *embed_dim, *hidden, seed)?,
            to_latent: Dense::new(store, "enc.latent", *hidden, *latent_dim, seed)?,
            dec_lstm: Lstm::new(store, "dec.lstm", *latent_dim, *hidden, seed)?,
            to_embed: Dense::new(store, "dec.embed_out", *hidden, *embed_dim, seed)?,
            to_vocab: Dense::new(store, "dec.vocab", *embed_dim, *vocab, seed)?,
        },
        AutoencoderArch::VisualStub { stub, input_shape, latent_dim } => {
            let n = numel(input_shape);
            let (enc, dec) = match stub {
                StubKind::Zero => (Tensor::zeros(&[n, *latent_dim]), Tensor::zeros(&[*latent_dim, n])),
                StubKind::Identity => (init::eye(n), init::eye(n)),
            };
            Net::Stub {
                enc: Dense::fixed(store, "stub.enc", enc, false)?,
                dec: Dense::fixed(store, "stub.dec", dec, false)?,
            }
        }
        AutoencoderArch::TextualStub { vocab, seq_len, embed_dim, latent_dim, .. } => Net::TextStub {
            embed: Embedding::fixed(store, "stub.embed", Tensor::zeros(&[*vocab, *latent_dim]), false)?,
            dec: Dense::fixed(store, "stub.dec", Tensor::zeros(&[*latent_dim, seq_len * embed_dim]), false)?,
        },
    })
}

/// What the encoder reads.
#[derive(Clone, Copy, Debug)]
pub enum BundleInput<'a> {
    /// `B×C×H×W`
    Image(Var),
    /// `B×T`
    Tokens(&'a IdTensor),
}

/// Record of how a bundle was trained. Losses are held-out reconstruction
/// losses: mean squared error for images, token cross-entropy for text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub dataset_fingerprint: String,
    pub samples: usize,
    pub heldout_samples: usize,
    pub epochs: usize,
    pub seed: u64,
    pub lr: Real,
    pub initial_loss: Real,
    pub final_loss: Real,
    pub loss_history: Vec<Real>,
    pub train_loss_history: Vec<Real>,
}

impl TrainManifest {
    fn untrained(fingerprint: &str) -> Self {
        TrainManifest {
            dataset_fingerprint: fingerprint.into(),
            samples: 0,
            heldout_samples: 0,
            epochs: 0,
            seed: 0,
            lr: 0.0,
            initial_loss: 0.0,
            final_loss: 0.0,
            loss_history: Vec::new(),
            train_loss_history: Vec::new(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct FileHeader {
    format: String,
    arch: AutoencoderArch,
    manifest: TrainManifest,
}

const FILE_FORMAT: &str = "autoencoder-bundle";

#[derive(Clone, Debug)]
pub struct AutoencoderBundle {
    arch: AutoencoderArch,
    store: ParamStore,
    net: Net,
    pub manifest: TrainManifest,
}

impl AutoencoderBundle {
    /// A randomly initialized, untrained bundle.
    pub fn new(arch: AutoencoderArch, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new(StoreTag::Bundle);
        let net = build_net(&arch, &mut store, seed)?;
        Ok(AutoencoderBundle {
            arch,
            store,
            net,
            manifest: TrainManifest::untrained(""),
        })
    }

    pub fn arch(&self) -> &AutoencoderArch {
        &self.arch
    }

    pub fn kind(&self) -> BundleKind {
        self.arch.kind()
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim()
    }

    pub fn input_shape(&self) -> Vec<usize> {
        self.arch.input_shape()
    }

    pub fn reconstruction_shape(&self) -> Vec<usize> {
        self.arch.reconstruction_shape()
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn is_stub(&self) -> bool {
        self.arch.is_stub()
    }

    /// Sets every parameter's trainable flag. Stubs stay frozen.
    pub fn set_frozen(&mut self, frozen: bool) {
        self.store.set_trainable(!frozen && !self.is_stub());
    }

    fn check_input(&self, g: &Graph, input: BundleInput) -> Result<usize> {
        let (got, want) = match input {
            BundleInput::Image(x) => {
                if self.kind() != BundleKind::Visual {
                    return Err(Error::Unsupported("image input to a textual bundle".into()));
                }
                (g.shape(x).to_vec(), self.input_shape())
            }
            BundleInput::Tokens(ids) => {
                if self.kind() != BundleKind::Textual {
                    return Err(Error::Unsupported("token input to a visual bundle".into()));
                }
                (ids.shape().to_vec(), self.input_shape())
            }
        };
        if got.len() != want.len() + 1 || got[1..] != want[..] {
            return Err(Error::ShapeMismatch {
                op: "encode",
                left: got,
                right: want,
            });
        }
        Ok(got[0])
    }

    /// `a = φ(x)`, shape `B×latent_dim`. Parameters are resolved through `p`
    /// so the bundle can run inside a larger model.
    pub fn encode_in(&self, g: &mut Graph, p: &impl Params, input: BundleInput) -> Result<Var> {
        let b = self.check_input(g, input)?;
        match (&self.net, input) {
            (Net::Visual { conv1, conv2, to_latent, mid, .. }, BundleInput::Image(x)) => {
                let h = conv1.forward(g, p, x)?;
                let h = g.relu(h);
                let h = conv2.forward(g, p, h)?;
                let h = g.relu(h);
                let h = g.reshape(h, &[b, numel(mid)])?;
                to_latent.forward(g, p, h)
            }
            (Net::Textual { embed, enc_lstm, to_latent, .. }, BundleInput::Tokens(ids)) => {
                let e = embed.forward(g, p, ids)?;
                let (_, last) = enc_lstm.forward(g, p, e)?;
                to_latent.forward(g, p, last)
            }
            (Net::Stub { enc, .. }, BundleInput::Image(x)) => {
                let flat = g.reshape(x, &[b, enc.input])?;
                enc.forward(g, p, flat)
            }
            (Net::TextStub { embed, .. }, BundleInput::Tokens(ids)) => {
                let e = embed.forward(g, p, ids)?;
                g.mean_axis(e, 1)
            }
            _ => unreachable!("input kind checked above"),
        }
    }

    /// `θ(a)` for a latent batch `B×latent_dim`. Images come back as
    /// `B×C×H×W`, text as `B×T×E`.
    pub fn decode_in(&self, g: &mut Graph, p: &impl Params, latent: Var) -> Result<Var> {
        let b = g.shape(latent)[0];
        match &self.net {
            Net::Visual { from_latent, deconv1, deconv2, mid, .. } => {
                let h = from_latent.forward(g, p, latent)?;
                let h = g.relu(h);
                let h = g.reshape(h, &[b, mid[0], mid[1], mid[2]])?;
                let h = deconv1.forward(g, p, h)?;
                let h = g.relu(h);
                deconv2.forward(g, p, h)
            }
            Net::Textual { dec_lstm, to_embed, .. } => {
                let t = self.input_shape()[0];
                let steps = vec![latent; t];
                let seq = g.stack(&steps, 1)?;
                let (hs, _) = dec_lstm.forward(g, p, seq)?;
                to_embed.forward_seq(g, p, hs)
            }
            Net::Stub { dec, .. } => {
                let y = dec.forward(g, p, latent)?;
                let mut shape = vec![b];
                shape.extend(self.input_shape());
                g.reshape(y, &shape)
            }
            Net::TextStub { dec, .. } => {
                let y = dec.forward(g, p, latent)?;
                let mut shape = vec![b];
                shape.extend(self.reconstruction_shape());
                g.reshape(y, &shape)
            }
        }
    }

    /// `θ(φ(x))`.
    pub fn reconstruct_in(&self, g: &mut Graph, p: &impl Params, input: BundleInput) -> Result<Var> {
        let a = self.encode_in(g, p, input)?;
        self.decode_in(g, p, a)
    }

    /// Vocabulary logits `B×T×V` from a textual reconstruction.
    pub fn token_logits_in(&self, g: &mut Graph, p: &impl Params, recon: Var) -> Result<Var> {
        match &self.net {
            Net::Textual { to_vocab, .. } => to_vocab.forward_seq(g, p, recon),
            _ => Err(Error::Unsupported("token logits need a trained textual bundle".into())),
        }
    }

    pub fn encode(&self, g: &mut Graph, input: BundleInput) -> Result<Var> {
        self.encode_in(g, &self.store, input)
    }

    pub fn reconstruct(&self, g: &mut Graph, input: BundleInput) -> Result<Var> {
        self.reconstruct_in(g, &self.store, input)
    }

    pub fn token_logits(&self, g: &mut Graph, recon: Var) -> Result<Var> {
        self.token_logits_in(g, &self.store, recon)
    }

    /// Per-sample layer applications of `encode`.
    pub fn encode_specs(&self) -> Vec<LayerSpec> {
        let relu = |elems| LayerSpec::Elementwise { op: Elementwise::Relu, elems };
        match &self.net {
            Net::Visual { conv1, conv2, to_latent, .. } => {
                let s0 = self.input_shape();
                let s1 = conv1.out_shape(&s0).expect("validated at build");
                let s2 = conv2.out_shape(&s1).expect("validated at build");
                vec![
                    conv1.spec(&s0).expect("validated at build"),
                    relu(numel(&s1)),
                    conv2.spec(&s1).expect("validated at build"),
                    relu(numel(&s2)),
                    to_latent.spec(1),
                ]
            }
            Net::Textual { embed, enc_lstm, to_latent, .. } => {
                let t = self.input_shape()[0];
                vec![embed.spec(), enc_lstm.spec(t), to_latent.spec(1)]
            }
            Net::Stub { enc, .. } => vec![enc.spec(1)],
            Net::TextStub { embed, .. } => {
                let t = self.input_shape()[0];
                vec![
                    embed.spec(),
                    LayerSpec::Elementwise {
                        op: Elementwise::Pool,
                        elems: t * embed.dim,
                    },
                ]
            }
        }
    }

    /// Per-sample layer applications of `decode`.
    pub fn decode_specs(&self) -> Vec<LayerSpec> {
        let relu = |elems| LayerSpec::Elementwise { op: Elementwise::Relu, elems };
        match &self.net {
            Net::Visual { from_latent, deconv1, deconv2, mid, .. } => {
                let s1 = deconv1.out_shape(mid).expect("validated at build");
                vec![
                    from_latent.spec(1),
                    relu(numel(mid)),
                    deconv1.spec(mid).expect("validated at build"),
                    relu(numel(&s1)),
                    deconv2.spec(&s1).expect("validated at build"),
                ]
            }
            Net::Textual { dec_lstm, to_embed, .. } => {
                let t = self.input_shape()[0];
                vec![dec_lstm.spec(t), to_embed.spec(t)]
            }
            Net::Stub { dec, .. } | Net::TextStub { dec, .. } => vec![dec.spec(1)],
        }
    }

    /// Reconstruction loss of a batch.
    fn batch_loss(&self, g: &mut Graph, batch: &Samples) -> Result<Var> {
        match batch {
            Samples::Images(x) => {
                let xv = g.constant(x.clone());
                let r = self.reconstruct(g, BundleInput::Image(xv))?;
                g.mse(r, xv)
            }
            Samples::Tokens(ids) => {
                let r = self.reconstruct(g, BundleInput::Tokens(ids))?;
                let logits = self.token_logits(g, r)?;
                let s = g.shape(logits).to_vec();
                let flat = g.reshape(logits, &[s[0] * s[1], s[2]])?;
                g.cross_entropy(flat, ids.data())
            }
        }
    }

    /// Mean reconstruction loss over `samples`, in chunks.
    pub fn loss(&self, samples: &Samples) -> Result<Real> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut total = 0.0;
        for start in (0..n).step_by(256) {
            let rows: Vec<usize> = (start..n.min(start + 256)).collect();
            let batch = samples.subset(&rows)?;
            let mut g = Graph::new();
            let l = self.batch_loss(&mut g, &batch)?;
            total += g.value(l).item() * rows.len() as Real;
        }
        Ok(total / n as Real)
    }

    pub fn to_weight_file(&self) -> WeightFile {
        let header = FileHeader {
            format: FILE_FORMAT.into(),
            arch: self.arch.clone(),
            manifest: self.manifest.clone(),
        };
        WeightFile {
            manifest: serde_json::to_string(&header).expect("header serializes"),
            params: self.store.iter().map(|p| (p.name.clone(), p.value.clone())).collect(),
        }
    }

    pub fn from_weight_file(file: &WeightFile) -> Result<Self> {
        let header: FileHeader = file.header(FILE_FORMAT, "an autoencoder bundle")?;
        Self::from_parts(header.arch, header.manifest, &file.params)
    }

    /// Rebuilds a bundle from its architecture, record and named weights.
    pub fn from_parts(arch: AutoencoderArch, manifest: TrainManifest, params: &[(String, Tensor)]) -> Result<Self> {
        let mut bundle = AutoencoderBundle::new(arch, 0)?;
        bundle.manifest = manifest;
        load_params(&mut bundle.store, params)?;
        if bundle.is_stub() {
            bundle.set_frozen(true);
        }
        Ok(bundle)
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

/// Overwrites every parameter of `store` from `params`, requiring the two
/// name sets to coincide.
pub(crate) fn load_params(store: &mut ParamStore, params: &[(String, Tensor)]) -> Result<()> {
    if params.len() != store.len() {
        let missing = store
            .iter()
            .find(|p| !params.iter().any(|(n, _)| n == &p.name))
            .map(|p| p.name.clone());
        return Err(match missing {
            Some(name) => Error::UnknownParameter(format!("{name} (missing from file)")),
            None => Error::Format {
                format: "SLPN",
                offset: 0,
                reason: format!("file has {} parameters, expected {}", params.len(), store.len()),
            },
        });
    }
    for (name, value) in params {
        let id = store.id_of(name).ok_or_else(|| Error::UnknownParameter(name.clone()))?;
        store.set_value(id, value.clone())?;
    }
    Ok(())
}

/// Zero or identity bundle for exact checks. Stub parameters are frozen.
pub fn make_stub(arch: AutoencoderArch) -> Result<AutoencoderBundle> {
    if !arch.is_stub() {
        return Err(Error::Stub(format!("{arch:?} is not a stub architecture")));
    }
    let mut b = AutoencoderBundle::new(arch, 0)?;
    b.manifest = TrainManifest::untrained("stub");
    Ok(b)
}

pub fn visual_stub(kind: StubKind, input_shape: &[usize], latent_dim: usize) -> Result<AutoencoderBundle> {
    make_stub(AutoencoderArch::VisualStub {
        stub: kind,
        input_shape: input_shape.to_vec(),
        latent_dim,
    })
}

/// Identity stub sized to `input_shape`.
pub fn identity_stub(input_shape: &[usize]) -> Result<AutoencoderBundle> {
    visual_stub(StubKind::Identity, input_shape, numel(input_shape))
}

fn check_samples(arch: &AutoencoderArch, samples: &Samples) -> Result<()> {
    let ok = match (arch.kind(), samples) {
        (BundleKind::Visual, Samples::Images(_)) => samples.item_shape() == arch.input_shape().as_slice(),
        (BundleKind::Textual, Samples::Tokens(t)) => {
            let v = arch.vocab().unwrap_or(0);
            samples.item_shape() == arch.input_shape().as_slice() && t.data().iter().all(|&id| id < v)
        }
        _ => false,
    };
    if !ok {
        return Err(Error::Dataset(format!(
            "samples of shape {:?} do not fit autoencoder input {:?}",
            samples.item_shape(),
            arch.input_shape()
        )));
    }
    Ok(())
}

/// Trains a bundle on unlabeled `samples` with Adam. A tenth of the samples
/// (when there are at least ten) is held out; otherwise the training set
/// doubles as the held-out set.
pub fn pretrain(samples: &Samples, arch: &AutoencoderArch, opt: &OptimizerConfig) -> Result<AutoencoderBundle> {
    if arch.is_stub() {
        return Err(Error::Stub("stubs are fixed and cannot be pretrained".into()));
    }
    opt.validate()?;
    let n = samples.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    check_samples(arch, samples)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (heldout_rows, train_rows) = if n >= 10 {
        let (h, t) = order.split_at(n / 10);
        (h.to_vec(), t.to_vec())
    } else {
        (order.clone(), order)
    };
    let heldout = samples.subset(&heldout_rows)?;

    let mut bundle = AutoencoderBundle::new(arch.clone(), opt.seed)?;
    let initial = bundle.loss(&heldout)?;
    if !initial.is_finite() {
        return Err(Error::Divergence {
            context: "pretraining (initial evaluation)".into(),
            loss: initial as f64,
        });
    }
    let mut history = Vec::with_capacity(opt.epochs);
    let mut train_history = Vec::with_capacity(opt.epochs);
    let mut rows = train_rows;
    for epoch in 0..opt.epochs {
        rows.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in rows.chunks(opt.batch_size) {
            let batch = samples.subset(chunk)?;
            let mut g = Graph::new();
            let l = bundle.batch_loss(&mut g, &batch)?;
            let value = g.value(l).item();
            if !value.is_finite() {
                return Err(Error::Divergence {
                    context: format!("pretraining epoch {}", epoch + 1),
                    loss: value as f64,
                });
            }
            sum += value * chunk.len() as Real;
            g.backward(l)?;
            bundle.store.accumulate_grads(&g);
            adam_step(&mut [&mut bundle.store], opt)?;
        }
        train_history.push(sum / rows.len() as Real);
        let held = bundle.loss(&heldout)?;
        if !held.is_finite() {
            return Err(Error::Divergence {
                context: format!("pretraining epoch {} (held-out)", epoch + 1),
                loss: held as f64,
            });
        }
        history.push(held);
    }
    bundle.manifest = TrainManifest {
        dataset_fingerprint: samples.fingerprint(),
        samples: n,
        heldout_samples: heldout.len(),
        epochs: opt.epochs,
        seed: opt.seed,
        lr: opt.lr,
        initial_loss: initial,
        final_loss: history.last().copied().unwrap_or(initial),
        loss_history: history,
        train_loss_history: train_history,
    };
    Ok(bundle)
}
