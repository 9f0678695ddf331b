//! Staged dumps of the reconstructions tapped inside a dream model.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::data::Samples;
use crate::error::{Error, Result};
use crate::model::{BlockGraph, Variant};
use crate::tensor::Tensor;
use crate::train::argmax_rows;
use crate::Real;

const ORDINALS: [&str; 10] = [
    "First", "Second", "Third", "Fourth", "Fifth", "Sixth", "Seventh", "Eighth", "Ninth", "Tenth",
];

/// "Original" for stage 0, then "The First Dream", "The Second Dream", …
pub fn stage_name(stage: usize) -> String {
    match stage {
        0 => "Original".into(),
        s if s <= ORDINALS.len() => format!("The {} Dream", ORDINALS[s - 1]),
        s => format!("Dream {s}"),
    }
}

/// One stage of a dump: the tensor for a single sample, plus token ids when
/// the stage is text.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub name: String,
    pub tensor: Tensor,
    pub tokens: Option<Vec<usize>>,
}

/// The original sample followed by the dream taps of blocks `1..=depth`.
/// `sample` must hold exactly one sample.
pub fn dream_stages(model: &BlockGraph, sample: &Samples, depth: usize) -> Result<Vec<Stage>> {
    if model.config().variant != Variant::Dream {
        return Err(Error::Config(format!("{} has no dream taps", model.model_id())));
    }
    if depth == 0 || depth > model.config().blocks {
        return Err(Error::Config(format!(
            "dream depth {depth} outside 1..={}",
            model.config().blocks
        )));
    }
    if sample.len() != 1 {
        return Err(Error::Dataset(format!("dream dump takes one sample, got {}", sample.len())));
    }
    let bundle = model.bundle().expect("dream models carry a bundle");
    let mut g = Graph::new();
    let trace = match sample {
        Samples::Images(x) => {
            let v = g.constant(x.clone());
            model.trace(&mut g, crate::model::ModelInput::Images(v))?
        }
        Samples::Tokens(ids) => model.trace(&mut g, crate::model::ModelInput::Tokens(ids))?,
    };
    let drop_batch = |t: &Tensor| Tensor::new(t.shape()[1..].to_vec(), t.data().to_vec());

    let mut stages = vec![match sample {
        Samples::Images(x) => Stage {
            name: stage_name(0),
            tensor: drop_batch(x)?,
            tokens: None,
        },
        Samples::Tokens(ids) => Stage {
            name: stage_name(0),
            tensor: Tensor::new(vec![ids.shape()[1]], ids.data().iter().map(|&i| i as Real).collect())?,
            tokens: Some(ids.data().to_vec()),
        },
    }];
    for (d, &tap) in trace.dreams.iter().take(depth).enumerate() {
        let tensor = drop_batch(g.value(tap))?;
        let tokens = match sample {
            Samples::Images(_) => None,
            Samples::Tokens(_) => {
                let logits = bundle.token_logits(&mut g, tap)?;
                let v = *g.shape(logits).last().expect("logits have a vocabulary axis");
                Some(argmax_rows(g.value(logits).data(), v))
            }
        };
        stages.push(Stage {
            name: stage_name(d + 1),
            tensor,
            tokens,
        });
    }
    Ok(stages)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: usize,
    pub name: String,
    /// Graymap image or token text.
    pub file: String,
    /// Raw tensor as JSON.
    pub raw: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DreamManifest {
    pub model_id: String,
    pub depth: usize,
    pub stages: Vec<StageEntry>,
}

#[derive(Serialize, Deserialize)]
pub struct RawTensor {
    pub shape: Vec<usize>,
    pub data: Vec<Real>,
}

/// Binary graymap, min-max normalized. Channels are stacked vertically.
pub fn to_pgm(t: &Tensor) -> Result<Vec<u8>> {
    let s = t.shape();
    let (rows, cols) = match s.len() {
        2 => (s[0], s[1]),
        3 => (s[0] * s[1], s[2]),
        _ => {
            return Err(Error::Geometry {
                op: "to_pgm",
                reason: format!("cannot render shape {s:?} as an image"),
            })
        }
    };
    let lo = t.data().iter().copied().fold(Real::INFINITY, Real::min);
    let hi = t.data().iter().copied().fold(Real::NEG_INFINITY, Real::max);
    let span = hi - lo;
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(t.data().iter().map(|&v| {
        if span > 0.0 {
            ((v - lo) / span * 255.0).round() as u8
        } else {
            0
        }
    }));
    Ok(out)
}

fn slug(name: &str) -> String {
    name.to_lowercase().replace(' ', "_")
}

/// Writes each stage of `dream_stages` to `out_dir` with a `manifest.json`.
/// Images become graymaps; text stages become space-separated tokens, using
/// `vocab` when given.
pub fn dream_dump(
    model: &BlockGraph,
    sample: &Samples,
    depth: usize,
    vocab: Option<&[String]>,
    out_dir: impl AsRef<Path>,
) -> Result<DreamManifest> {
    let stages = dream_stages(model, sample, depth)?;
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(stages.len());
    for (i, st) in stages.iter().enumerate() {
        let base = format!("stage{i}_{}", slug(&st.name));
        let file = match &st.tokens {
            None => {
                let f = format!("{base}.pgm");
                std::fs::write(dir.join(&f), to_pgm(&st.tensor)?)?;
                f
            }
            Some(ids) => {
                let words: Vec<String> = ids
                    .iter()
                    .map(|&id| match vocab.and_then(|v| v.get(id)) {
                        Some(w) => w.clone(),
                        None => format!("#{id}"),
                    })
                    .collect();
                let f = format!("{base}.txt");
                std::fs::write(dir.join(&f), words.join(" ") + "\n")?;
                f
            }
        };
        let raw = format!("{base}.json");
        let body = RawTensor {
            shape: st.tensor.shape().to_vec(),
            data: st.tensor.data().to_vec(),
        };
        std::fs::write(dir.join(&raw), serde_json::to_string(&body)?)?;
        entries.push(StageEntry {
            stage: i,
            name: st.name.clone(),
            file,
            raw,
            shape: st.tensor.shape().to_vec(),
        });
    }
    let manifest = DreamManifest {
        model_id: model.model_id(),
        depth,
        stages: entries,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}
