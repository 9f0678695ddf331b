//! Supervised training, evaluation, run records and the ablation runner.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::autoencoder::{make_stub, pretrain, AutoencoderBundle};
use crate::config::{BundleSource, FreezeMode, RunConfig};
use crate::cost::CostReport;
use crate::data::{Dataset, Samples};
use crate::error::{Error, Result};
use crate::model::{BlockGraph, Task, Variant};
use crate::optim::{adam_step, OptimizerConfig};
use crate::Real;

const EVAL_CHUNK: usize = 256;

/// Metrics after one epoch. Training figures are averaged over the epoch's
/// minibatches as they were seen; test figures come from a full pass after
/// the epoch. Epoch 0 is the untrained model, measured with full passes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: Real,
    pub train_accuracy: Real,
    pub test_loss: Option<Real>,
    pub test_accuracy: Option<Real>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// A non-finite loss or gradient stopped the run during `epoch`.
    Diverged { epoch: usize, reason: String },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub model_id: String,
    pub config_hash: Option<String>,
    pub optimizer: OptimizerConfig,
    pub freeze: FreezeMode,
    pub status: RunStatus,
    pub initial: EpochRecord,
    pub epochs: Vec<EpochRecord>,
    pub cost: CostReport,
    pub notes: Vec<String>,
    /// Wall-clock seconds per epoch. Kept out of the serialized record so
    /// that metrics files depend only on config and seed.
    #[serde(skip)]
    pub epoch_seconds: Vec<f64>,
}

/// Equality ignores wall time.
impl PartialEq for RunRecord {
    fn eq(&self, other: &Self) -> bool {
        self.model_id == other.model_id
            && self.config_hash == other.config_hash
            && self.optimizer == other.optimizer
            && self.freeze == other.freeze
            && self.status == other.status
            && self.initial == other.initial
            && self.epochs == other.epochs
            && self.cost == other.cost
            && self.notes == other.notes
    }
}

impl RunRecord {
    fn last(&self) -> &EpochRecord {
        self.epochs.last().unwrap_or(&self.initial)
    }

    pub fn final_train_loss(&self) -> Real {
        self.last().train_loss
    }

    pub fn final_train_accuracy(&self) -> Real {
        self.last().train_accuracy
    }

    pub fn final_test_accuracy(&self) -> Option<Real> {
        self.last().test_accuracy
    }

    /// One `(epoch, split, metric, value)` event per recorded figure.
    pub fn events(&self) -> Vec<MetricEvent> {
        let mut out = Vec::new();
        for e in std::iter::once(&self.initial).chain(&self.epochs) {
            let mut push = |split: &'static str, metric: &'static str, value: Real| {
                out.push(MetricEvent {
                    epoch: e.epoch,
                    split,
                    metric,
                    value,
                })
            };
            push("train", "loss", e.train_loss);
            push("train", "accuracy", e.train_accuracy);
            if let Some(v) = e.test_loss {
                push("test", "loss", v);
            }
            if let Some(v) = e.test_accuracy {
                push("test", "accuracy", v);
            }
        }
        out
    }

    /// Writes `metrics.jsonl`, `summary.json` and `timing.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut lines = String::new();
        for ev in self.events() {
            lines.push_str(&serde_json::to_string(&ev)?);
            lines.push('\n');
        }
        std::fs::write(dir.join("metrics.jsonl"), lines)?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(self)? + "\n")?;
        let timing = serde_json::json!({
            "epoch_seconds": self.epoch_seconds,
            "total_seconds": self.epoch_seconds.iter().sum::<f64>(),
        });
        std::fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&timing)? + "\n")?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricEvent {
    pub epoch: usize,
    pub split: &'static str,
    pub metric: &'static str,
    pub value: Real,
}

/// Index of the largest entry per row; ties go to the lowest index.
pub fn argmax_rows(logits: &[Real], classes: usize) -> Vec<usize> {
    logits
        .chunks(classes)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

fn correct(pred: &[usize], labels: &[usize]) -> usize {
    pred.iter().zip(labels).filter(|(p, l)| p == l).count()
}

/// Predicted class per sample.
pub fn predict(model: &BlockGraph, samples: &Samples) -> Result<Vec<usize>> {
    let n = samples.len();
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(EVAL_CHUNK) {
        let rows: Vec<usize> = (start..n.min(start + EVAL_CHUNK)).collect();
        let mut g = Graph::new();
        let logits = model.forward_samples(&mut g, &samples.subset(&rows)?)?;
        out.extend(argmax_rows(g.value(logits).data(), model.config().classes));
    }
    Ok(out)
}

/// Mean cross-entropy and accuracy over a full pass.
pub fn evaluate_loss(model: &BlockGraph, data: &Dataset) -> Result<(Real, Real)> {
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let samples = data.samples();
    let (mut loss, mut hits) = (0.0, 0);
    for start in (0..n).step_by(EVAL_CHUNK) {
        let rows: Vec<usize> = (start..n.min(start + EVAL_CHUNK)).collect();
        let labels: Vec<usize> = rows.iter().map(|&r| data.labels()[r]).collect();
        let mut g = Graph::new();
        let logits = model.forward_samples(&mut g, &samples.subset(&rows)?)?;
        hits += correct(&argmax_rows(g.value(logits).data(), model.config().classes), &labels);
        let l = g.cross_entropy(logits, &labels)?;
        loss += g.value(l).item() * rows.len() as Real;
    }
    Ok((loss / n as Real, hits as Real / n as Real))
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn evaluate(model: &BlockGraph, data: &Dataset) -> Result<Real> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let pred = predict(model, &data.samples())?;
    Ok(correct(&pred, data.labels()) as Real / data.len() as Real)
}

fn check_fits(model: &BlockGraph, data: &Dataset) -> Result<()> {
    data.check()?;
    let want = model.config().input_shape();
    if data.samples().item_shape() != want.as_slice() || data.classes() != model.config().classes {
        return Err(Error::Dataset(format!(
            "{} samples of shape {:?} with {} classes do not fit {} (input {want:?}, {} classes)",
            data.len(),
            data.samples().item_shape(),
            data.classes(),
            model.model_id(),
            model.config().classes
        )));
    }
    Ok(())
}

/// Trains `model` on `train` with Adam and per-epoch seeded shuffling.
/// A non-finite loss or gradient ends the run early with a partial record.
pub fn train(
    model: &mut BlockGraph,
    train: &Dataset,
    test: Option<&Dataset>,
    opt: &OptimizerConfig,
    freeze: FreezeMode,
) -> Result<RunRecord> {
    opt.validate()?;
    check_fits(model, train)?;
    if let Some(t) = test {
        check_fits(model, t)?;
    }
    model.set_bundle_frozen(freeze == FreezeMode::Frozen);

    let test_eval = |m: &BlockGraph| -> Result<(Option<Real>, Option<Real>)> {
        Ok(match test {
            Some(t) if !t.is_empty() => {
                let (l, a) = evaluate_loss(m, t)?;
                (Some(l), Some(a))
            }
            _ => (None, None),
        })
    };
    let (train_loss, train_accuracy) = evaluate_loss(model, train)?;
    let (test_loss, test_accuracy) = test_eval(model)?;
    let mut record = RunRecord {
        model_id: model.model_id(),
        config_hash: None,
        optimizer: opt.clone(),
        freeze,
        status: RunStatus::Completed,
        initial: EpochRecord {
            epoch: 0,
            train_loss,
            train_accuracy,
            test_loss,
            test_accuracy,
        },
        epochs: Vec::with_capacity(opt.epochs),
        cost: model.cost_report(),
        notes: model.config().warnings(),
        epoch_seconds: Vec::with_capacity(opt.epochs),
    };
    if !train_loss.is_finite() {
        record.status = RunStatus::Diverged {
            epoch: 0,
            reason: format!("initial loss {train_loss}"),
        };
        return Ok(record);
    }

    let samples = train.samples();
    let labels = train.labels();
    let classes = model.config().classes;
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=opt.epochs {
        let clock = Instant::now();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut hits) = (0.0, 0);
        for chunk in order.chunks(opt.batch_size) {
            let batch = samples.subset(chunk)?;
            let y: Vec<usize> = chunk.iter().map(|&r| labels[r]).collect();
            let mut g = Graph::new();
            let logits = model.forward_samples(&mut g, &batch)?;
            hits += correct(&argmax_rows(g.value(logits).data(), classes), &y);
            let l = g.cross_entropy(logits, &y)?;
            let value = g.value(l).item();
            if !value.is_finite() {
                record.status = RunStatus::Diverged {
                    epoch,
                    reason: format!("loss {value}"),
                };
                return Ok(record);
            }
            loss_sum += value * chunk.len() as Real;
            g.backward(l)?;
            let mut stores = model.stores_mut();
            for s in stores.iter_mut() {
                s.accumulate_grads(&g);
            }
            match adam_step(&mut stores, opt) {
                Ok(()) => {}
                Err(Error::NonFiniteGradient(name)) => {
                    record.status = RunStatus::Diverged {
                        epoch,
                        reason: format!("non-finite gradient in `{name}`"),
                    };
                    for s in model.stores_mut() {
                        s.zero_grad();
                    }
                    return Ok(record);
                }
                Err(e) => return Err(e),
            }
        }
        let (test_loss, test_accuracy) = test_eval(model)?;
        let n = train.len() as Real;
        record.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: hits as Real / n,
            test_loss,
            test_accuracy,
        });
        record.epoch_seconds.push(clock.elapsed().as_secs_f64());
    }
    Ok(record)
}

/// Everything produced by one end-to-end run.
pub struct RunOutput {
    pub model: BlockGraph,
    pub record: RunRecord,
    pub train: Dataset,
    pub test: Dataset,
}

/// The bundle a config asks for, pretrained on `train` when required.
pub fn prepare_bundle(cfg: &RunConfig, train: &Dataset) -> Result<Option<AutoencoderBundle>> {
    if !cfg.needs_bundle() {
        return Ok(None);
    }
    let arch = cfg.bundle_arch();
    let bundle = match cfg.bundle.source {
        BundleSource::ZeroStub | BundleSource::IdentityStub => make_stub(arch)?,
        BundleSource::Pretrain => pretrain(&train.samples(), &arch, &cfg.pretrain_optimizer())?,
        BundleSource::File => {
            let path = cfg.bundle.path.as_deref().expect("validated");
            let b = AutoencoderBundle::load(path)?;
            if b.input_shape() != arch.input_shape() || b.kind() != arch.kind() {
                return Err(Error::Config(format!(
                    "bundle at {path} takes {:?} input, the model needs {:?}",
                    b.input_shape(),
                    arch.input_shape()
                )));
            }
            b
        }
    };
    Ok(Some(bundle))
}

/// Loads data, prepares the bundle, builds and trains the model.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let (train_set, test_set) = cfg.load_data()?;
    let bundle = prepare_bundle(cfg, &train_set)?;
    let mut model = BlockGraph::build(&cfg.model, bundle, cfg.seed)?;
    let mut record = train(&mut model, &train_set, Some(&test_set), &cfg.optimizer, cfg.freeze)?;
    record.config_hash = Some(cfg.hash());
    let default_lr = OptimizerConfig::default().lr;
    if cfg.optimizer.lr != default_lr {
        record.notes.push(format!("lr overridden: {} (default {default_lr})", cfg.optimizer.lr));
    }
    Ok(RunOutput {
        model,
        record,
        train: train_set,
        test: test_set,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// M = 1..4.
    BlockCount,
    /// Visual: 1, 2 or 3 conv layers per block. Textual: half, base and
    /// double LSTM width.
    ChainKind,
    /// Autoencoder latent width 16, 32 or 64.
    BundleKind,
    /// Frozen and unfrozen bundle.
    Freeze,
    /// Chain only, sleep and dream with everything else fixed.
    Variant,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| Error::Config(format!("unknown suite `{s}` (block_count, chain_kind, bundle_kind, freeze, variant)")))
    }
}

/// Labelled configs of one ablation grid.
pub fn suite_cells(suite: Suite, base: &RunConfig) -> Result<Vec<(String, RunConfig)>> {
    let with = |label: String, f: &dyn Fn(&mut RunConfig)| {
        let mut c = base.clone();
        f(&mut c);
        (label, c)
    };
    if matches!(suite, Suite::BundleKind | Suite::Freeze) && base.model.variant == Variant::Chain {
        return Err(Error::Config(format!("suite {suite:?} needs a sleep or dream base config")));
    }
    let cells = match suite {
        Suite::BlockCount => (1..=4).map(|m| with(format!("M={m}"), &|c| c.model.blocks = m)).collect(),
        Suite::ChainKind => match base.model.task {
            Task::Visual => (1..=3)
                .map(|l| with(format!("layers={l}"), &|c| c.model.layers_per_block = l))
                .collect(),
            Task::Textual => {
                let w = base.model.block_widths()?[0];
                [w / 2, w, 2 * w]
                    .into_iter()
                    .map(|h| with(format!("hidden={h}"), &|c| c.model.widths = vec![h]))
                    .collect()
            }
        },
        Suite::BundleKind => [16, 32, 64]
            .into_iter()
            .map(|d| with(format!("latent={d}"), &|c| c.bundle.latent_dim = d))
            .collect(),
        Suite::Freeze => vec![
            with("frozen".into(), &|c| c.freeze = FreezeMode::Frozen),
            with("unfrozen".into(), &|c| c.freeze = FreezeMode::Unfrozen),
        ],
        Suite::Variant => [Variant::Chain, Variant::Sleep, Variant::Dream]
            .into_iter()
            .map(|v| {
                let mut c = base.clone();
                c.model.variant = v;
                (c.model.model_id(), c)
            })
            .collect(),
    };
    Ok(cells)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Ok { record: RunRecord },
    Failed { error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub outcome: CellOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub suite: Suite,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Plain-text comparison: test accuracy, parameters and FLOPs per row.
    pub fn report(&self) -> String {
        let mut out = format!(
            "{:<14} {:<14} {:>9} {:>10} {:>10} {:>12}\n",
            "cell", "model", "test acc", "#params", "frozen", "FLOPs"
        );
        for r in &self.rows {
            match &r.outcome {
                CellOutcome::Ok { record } => {
                    let acc = record
                        .final_test_accuracy()
                        .map_or("-".to_string(), |a| format!("{:.2}%", 100.0 * a as f64));
                    out.push_str(&format!(
                        "{:<14} {:<14} {:>9} {:>10} {:>10} {:>12}\n",
                        r.label,
                        record.model_id,
                        acc,
                        record.cost.param_count,
                        record.cost.frozen_params,
                        record.cost.flops_per_forward
                    ));
                }
                CellOutcome::Failed { error } => out.push_str(&format!("{:<14} failed: {error}\n", r.label)),
            }
        }
        out
    }
}

/// Worker count from `SOMNUS_THREADS`, defaulting to 1.
pub fn threads_from_env() -> usize {
    std::env::var("SOMNUS_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or(1)
}

/// Runs every cell of `suite`, up to `threads` at a time. Cells are
/// independent, so the table does not depend on the thread count. A failing
/// cell is recorded and the rest of the grid still runs.
pub fn run_ablation(suite: Suite, base: &RunConfig, threads: usize) -> Result<AblationTable> {
    base.validate()?;
    let cells = suite_cells(suite, base)?;
    let run_cell = |cfg: &RunConfig| match run(cfg) {
        Ok(out) => CellOutcome::Ok { record: out.record },
        Err(e) => CellOutcome::Failed { error: e.to_string() },
    };
    let mut outcomes: Vec<Option<CellOutcome>> = vec![None; cells.len()];
    for (batch, slots) in cells.chunks(threads.max(1)).zip(outcomes.chunks_mut(threads.max(1))) {
        std::thread::scope(|s| {
            let handles: Vec<_> = batch.iter().map(|(_, cfg)| s.spawn(|| run_cell(cfg))).collect();
            for (slot, h) in slots.iter_mut().zip(handles) {
                *slot = Some(h.join().unwrap_or_else(|_| CellOutcome::Failed {
                    error: "cell panicked".into(),
                }));
            }
        });
    }
    let rows = cells
        .into_iter()
        .zip(outcomes)
        .map(|((label, config), outcome)| AblationRow {
            label,
            config_hash: config.hash(),
            config,
            outcome: outcome.expect("every cell ran"),
        })
        .collect();
    Ok(AblationTable { suite, rows })
}
