//! Seeded synthetic classification sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ImageDataset, TextDataset};
use crate::error::{Error, Result};
use crate::tensor::{IdTensor, Tensor};
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageKind {
    Shapes2,
    Shapes4,
}

impl ImageKind {
    pub fn classes(self) -> usize {
        match self {
            ImageKind::Shapes2 => 2,
            ImageKind::Shapes4 => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextKind {
    Keyword2,
    Keyword4,
}

impl TextKind {
    pub fn classes(self) -> usize {
        match self {
            TextKind::Keyword2 => 2,
            TextKind::Keyword4 => 4,
        }
    }
}

/// Binary mask for class `class` on a `size×size` grid: square, cross,
/// circle, triangle.
pub fn template(class: usize, size: usize) -> Vec<bool> {
    let s = size as Real;
    let mut out = vec![false; size * size];
    for y in 0..size {
        for x in 0..size {
            let (fy, fx) = (y as Real + 0.5, x as Real + 0.5);
            let inside = match class {
                0 => fy > s * 0.25 && fy < s * 0.75 && fx > s * 0.25 && fx < s * 0.75,
                1 => {
                    let half = (s / 16.0).max(0.5);
                    let span = fy > s * 0.125 && fy < s * 0.875 && fx > s * 0.125 && fx < s * 0.875;
                    span && ((fy - s / 2.0).abs() <= half || (fx - s / 2.0).abs() <= half)
                }
                2 => {
                    let (dy, dx) = (fy - s / 2.0, fx - s / 2.0);
                    dy * dy + dx * dx <= (s * 0.35) * (s * 0.35)
                }
                _ => {
                    // apex at the top centre, base along y = 0.8·s
                    let (top, base) = (s * 0.15, s * 0.8);
                    if fy < top || fy > base {
                        false
                    } else {
                        let half_width = (fy - top) / (base - top) * s * 0.35;
                        (fx - s / 2.0).abs() <= half_width
                    }
                }
            };
            out[y * size + x] = inside;
        }
    }
    out
}

/// Renders `n` single-channel `size×size` images. Sample `i` has label
/// `i mod k`; every pixel gets additive uniform noise in `[-noise, noise]`
/// and is clamped to `[0, 1]`. Values are rounded to 32-bit so that the
/// SIMG round trip is exact.
pub fn gen_synthetic_images(kind: ImageKind, n: usize, noise: Real, seed: u64, size: usize) -> Result<ImageDataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(0.0..0.5).contains(&noise) {
        return Err(Error::Dataset(format!("noise {noise} outside [0, 0.5)")));
    }
    if size < 4 {
        return Err(Error::Dataset(format!("image size {size} too small")));
    }
    let k = kind.classes();
    let templates: Vec<Vec<bool>> = (0..k).map(|c| template(c, size)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * size * size);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % k;
        labels.push(label);
        for &on in &templates[label] {
            let base: Real = if on { 1.0 } else { 0.0 };
            let jitter = if noise > 0.0 { rng.gen_range(-noise..=noise) } else { 0.0 };
            data.push(((base + jitter).clamp(0.0, 1.0) as f32) as Real);
        }
    }
    Ok(ImageDataset {
        images: Tensor::new(vec![n, 1, size, size], data)?,
        labels,
        classes: k,
    })
}

/// Id 0 is padding, ids `1..=k` are the class keywords and the rest are
/// filler. Each sequence has a random length in `[T/2, T]`, random filler,
/// and its class keyword at one random position.
pub fn gen_synthetic_text(kind: TextKind, n: usize, vocab_size: usize, seq_len: usize, seed: u64) -> Result<TextDataset> {
    let k = kind.classes();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if vocab_size <= 2 * k {
        return Err(Error::Dataset(format!("vocab size {vocab_size} must exceed {}", 2 * k)));
    }
    if seq_len < 2 {
        return Err(Error::Dataset(format!("sequence length {seq_len} too short")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = Vec::with_capacity(n * seq_len);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % k;
        labels.push(label);
        let len = rng.gen_range(seq_len.div_ceil(2)..=seq_len);
        let at = rng.gen_range(0..len);
        for t in 0..seq_len {
            ids.push(if t >= len {
                0
            } else if t == at {
                label + 1
            } else {
                rng.gen_range(k + 1..vocab_size)
            });
        }
    }
    let mut vocab = vec!["<pad>".to_string()];
    vocab.extend((0..k).map(|c| format!("key{c}")));
    vocab.extend((k + 1..vocab_size).map(|j| format!("w{j}")));
    Ok(TextDataset {
        tokens: IdTensor::new(vec![n, seq_len], ids)?,
        labels,
        classes: k,
        vocab,
    })
}
