//! Run configuration: one strict JSON document plus dotted-path overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::autoencoder::{AutoencoderArch, StubKind};
use crate::data::synth::{gen_synthetic_images, gen_synthetic_text, ImageKind, TextKind};
use crate::data::{formats, Dataset};
use crate::error::{Error, Result};
use crate::hash::sha256_hex;
use crate::model::{ModelConfig, Task, Variant};
use crate::optim::OptimizerConfig;
use crate::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezeMode {
    #[default]
    Frozen,
    Unfrozen,
}

/// Where training data comes from. Files win over the generator; without a
/// test file the training set is split by `test_fraction`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<String>,
    pub test: Option<String>,
    pub test_fraction: f64,
    pub synthetic: SynthConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train: None,
            test: None,
            test_fraction: 0.2,
            synthetic: SynthConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    Shapes2,
    Shapes4,
    Keyword2,
    Keyword4,
}

/// Generator settings. Image size, vocabulary and sequence length follow the
/// model config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Defaults to shapes4 or keyword4 by task.
    pub kind: Option<SynthKind>,
    pub n: usize,
    pub noise: Real,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            kind: None,
            n: 2000,
            noise: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleSource {
    /// Pretrain on the training inputs before supervised training.
    #[default]
    Pretrain,
    /// Load a saved bundle from `path`.
    File,
    ZeroStub,
    IdentityStub,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BundleConfig {
    pub source: BundleSource,
    pub path: Option<String>,
    pub latent_dim: usize,
    /// Visual encoder conv widths.
    pub channels: [usize; 2],
    /// Textual encoder LSTM width.
    pub hidden: usize,
    pub pretrain_epochs: usize,
    /// Falls back to the supervised learning rate.
    pub pretrain_lr: Option<Real>,
}

impl Default for BundleConfig {
    fn default() -> Self {
        BundleConfig {
            source: BundleSource::Pretrain,
            path: None,
            latent_dim: 32,
            channels: [8, 16],
            hidden: 64,
            pretrain_epochs: 10,
            pretrain_lr: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub freeze: FreezeMode,
    pub bundle: BundleConfig,
    pub data: DataConfig,
    /// Seeds model initialization; the optimizer has its own seed for batch order.
    pub seed: u64,
    pub output_dir: Option<String>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_value(v)
    }

    pub fn from_value(v: Value) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Loads `path` (or the defaults) and applies `key=value` overrides.
    pub fn load_with_overrides(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut v = match path {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?).map_err(|e| Error::Config(e.to_string()))?,
            None => serde_json::to_value(RunConfig::default())?,
        };
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        Self::from_value(v)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optimizer.validate()?;
        if !(self.data.test_fraction > 0.0 && self.data.test_fraction < 1.0) {
            return Err(Error::Config(format!("data.test_fraction {} outside (0, 1)", self.data.test_fraction)));
        }
        if self.data.train.is_none() && self.data.test.is_some() {
            return Err(Error::Config("data.test given without data.train".into()));
        }
        if self.data.train.is_none() {
            let kind = self.synth_kind();
            let textual = matches!(kind, SynthKind::Keyword2 | SynthKind::Keyword4);
            if textual != (self.model.task == Task::Textual) {
                return Err(Error::Config(format!("synthetic kind {kind:?} does not fit task {:?}", self.model.task)));
            }
        }
        if self.bundle.source == BundleSource::File && self.bundle.path.is_none() {
            return Err(Error::Config("bundle.source = file needs bundle.path".into()));
        }
        if self.bundle.latent_dim == 0 || self.bundle.hidden == 0 || self.bundle.channels.contains(&0) {
            return Err(Error::Config("bundle sizes must be positive".into()));
        }
        if let Some(lr) = self.bundle.pretrain_lr {
            if !(lr > 0.0) {
                return Err(Error::Config(format!("bundle.pretrain_lr must be positive, got {lr}")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn needs_bundle(&self) -> bool {
        self.model.variant != Variant::Chain
    }

    pub fn synth_kind(&self) -> SynthKind {
        self.data.synthetic.kind.unwrap_or(match self.model.task {
            Task::Visual => SynthKind::Shapes4,
            Task::Textual => SynthKind::Keyword4,
        })
    }

    /// Autoencoder architecture matching the model's input contract.
    pub fn bundle_arch(&self) -> AutoencoderArch {
        let m = &self.model;
        let b = &self.bundle;
        let stub = match b.source {
            BundleSource::ZeroStub => Some(StubKind::Zero),
            BundleSource::IdentityStub => Some(StubKind::Identity),
            _ => None,
        };
        match (m.task, stub) {
            (Task::Visual, None) => AutoencoderArch::VisualConv {
                input_shape: m.image_shape.clone(),
                channels: b.channels,
                latent_dim: b.latent_dim,
            },
            (Task::Visual, Some(stub)) => AutoencoderArch::VisualStub {
                stub,
                input_shape: m.image_shape.clone(),
                latent_dim: match stub {
                    StubKind::Identity => m.image_shape.iter().product(),
                    StubKind::Zero => b.latent_dim,
                },
            },
            (Task::Textual, None) => AutoencoderArch::TextualLstm {
                vocab: m.vocab,
                seq_len: m.seq_len,
                embed_dim: m.embed_dim,
                hidden: b.hidden,
                latent_dim: b.latent_dim,
            },
            (Task::Textual, Some(stub)) => AutoencoderArch::TextualStub {
                stub,
                vocab: m.vocab,
                seq_len: m.seq_len,
                embed_dim: m.embed_dim,
                latent_dim: b.latent_dim,
            },
        }
    }

    /// Optimizer settings for bundle pretraining.
    pub fn pretrain_optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            epochs: self.bundle.pretrain_epochs,
            lr: self.bundle.pretrain_lr.unwrap_or(self.optimizer.lr),
            ..self.optimizer.clone()
        }
    }

    /// Train and test splits, loaded or generated.
    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        let (train, test) = match &self.data.train {
            Some(path) => {
                let train = self.load_file(path)?;
                match &self.data.test {
                    Some(t) => (train, self.load_file(t)?),
                    None => train.split(self.data.test_fraction, self.data.synthetic.seed)?,
                }
            }
            None => self.generate()?.split(self.data.test_fraction, self.data.synthetic.seed)?,
        };
        for d in [&train, &test] {
            self.check_fits(d)?;
        }
        Ok((train, test))
    }

    fn load_file(&self, path: &str) -> Result<Dataset> {
        Ok(match self.model.task {
            Task::Visual => Dataset::Images(formats::load_images(path)?),
            Task::Textual => Dataset::Text(formats::load_text(path)?),
        })
    }

    pub fn generate(&self) -> Result<Dataset> {
        let s = &self.data.synthetic;
        let m = &self.model;
        Ok(match self.synth_kind() {
            k @ (SynthKind::Shapes2 | SynthKind::Shapes4) => {
                if m.image_shape[0] != 1 || m.image_shape[1] != m.image_shape[2] {
                    return Err(Error::Config(format!(
                        "synthetic images are 1×S×S, model expects {:?}",
                        m.image_shape
                    )));
                }
                let kind = if k == SynthKind::Shapes2 { ImageKind::Shapes2 } else { ImageKind::Shapes4 };
                Dataset::Images(gen_synthetic_images(kind, s.n, s.noise, s.seed, m.image_shape[1])?)
            }
            k => {
                let kind = if k == SynthKind::Keyword2 { TextKind::Keyword2 } else { TextKind::Keyword4 };
                Dataset::Text(gen_synthetic_text(kind, s.n, m.vocab, m.seq_len, s.seed)?)
            }
        })
    }

    /// Checks that a dataset matches the model's input shape and class count.
    pub fn check_fits(&self, d: &Dataset) -> Result<()> {
        d.check()?;
        let samples = d.samples();
        let want = self.model.input_shape();
        if samples.item_shape() != want.as_slice() {
            return Err(Error::Dataset(format!(
                "samples of shape {:?} do not fit model input {want:?}",
                samples.item_shape()
            )));
        }
        if d.classes() != self.model.classes {
            return Err(Error::Dataset(format!(
                "dataset has {} classes, model has {}",
                d.classes(),
                self.model.classes
            )));
        }
        if let Dataset::Text(t) = d {
            if t.vocab.len() > self.model.vocab {
                return Err(Error::Dataset(format!(
                    "dataset vocabulary of {} exceeds model vocabulary {}",
                    t.vocab.len(),
                    self.model.vocab
                )));
            }
        }
        Ok(())
    }
}

/// Applies `a.b.c=value` to a JSON document. The value is parsed as JSON,
/// falling back to a plain string. Intermediate objects are created.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("override key `{path}` has an empty segment")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    for key in &keys[..keys.len() - 1] {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override `{path}`: `{key}` is not inside an object")))?;
        cur = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = cur
        .as_object_mut()
        .ok_or_else(|| Error::Config(format!("override `{path}` does not address an object field")))?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}
