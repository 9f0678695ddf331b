//! In-memory datasets, synthetic generators and the SIMG/STXT formats.

pub mod formats;
pub mod synth;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hash::sha256_hex;
use crate::tensor::{IdTensor, Tensor};

/// Unlabeled model inputs: images `N×C×H×W` or token ids `N×T`.
#[derive(Clone, Debug, PartialEq)]
pub enum Samples {
    Images(Tensor),
    Tokens(IdTensor),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Images(t) => t.shape()[0],
            Samples::Tokens(t) => t.shape()[0],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shape of one sample.
    pub fn item_shape(&self) -> &[usize] {
        match self {
            Samples::Images(t) => &t.shape()[1..],
            Samples::Tokens(t) => &t.shape()[1..],
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Result<Samples> {
        Ok(match self {
            Samples::Images(t) => Samples::Images(t.gather_rows(rows)?),
            Samples::Tokens(t) => Samples::Tokens(t.gather_rows(rows)?),
        })
    }

    /// SHA-256 over shape and values.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::new();
        match self {
            Samples::Images(t) => {
                bytes.extend_from_slice(b"images");
                t.shape().iter().for_each(|d| bytes.extend_from_slice(&(*d as u64).to_le_bytes()));
                t.data().iter().for_each(|v| bytes.extend_from_slice(&(*v as f64).to_le_bytes()));
            }
            Samples::Tokens(t) => {
                bytes.extend_from_slice(b"tokens");
                t.shape().iter().for_each(|d| bytes.extend_from_slice(&(*d as u64).to_le_bytes()));
                t.data().iter().for_each(|v| bytes.extend_from_slice(&(*v as u64).to_le_bytes()));
            }
        }
        sha256_hex(&bytes)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageDataset {
    /// `N×C×H×W`, values in `[0, 1]`.
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextDataset {
    /// `N×T`, padded with id 0.
    pub tokens: IdTensor,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub vocab: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Images(ImageDataset),
    Text(TextDataset),
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> &[usize] {
        match self {
            Dataset::Images(d) => &d.labels,
            Dataset::Text(d) => &d.labels,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Dataset::Images(d) => d.classes,
            Dataset::Text(d) => d.classes,
        }
    }

    pub fn samples(&self) -> Samples {
        match self {
            Dataset::Images(d) => Samples::Images(d.images.clone()),
            Dataset::Text(d) => Samples::Tokens(d.tokens.clone()),
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        let labels: Vec<usize> = rows.iter().map(|&r| self.labels()[r]).collect();
        Ok(match self {
            Dataset::Images(d) => Dataset::Images(ImageDataset {
                images: d.images.gather_rows(rows)?,
                labels,
                classes: d.classes,
            }),
            Dataset::Text(d) => Dataset::Text(TextDataset {
                tokens: d.tokens.gather_rows(rows)?,
                labels,
                classes: d.classes,
                vocab: d.vocab.clone(),
            }),
        })
    }

    /// Seeded shuffle, then the first `round(n·test_fraction)` rows become
    /// the test split. Both sides must be non-empty.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::Config(format!("test fraction {test_fraction} outside (0, 1)")));
        }
        let n = self.len();
        let n_test = (n as f64 * test_fraction).round() as usize;
        if n_test == 0 || n_test == n {
            return Err(Error::Dataset(format!(
                "splitting {n} samples at {test_fraction} leaves {} empty",
                if n_test == 0 { "the test split" } else { "the training split" }
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (test, train) = order.split_at(n_test);
        Ok((self.subset(train)?, self.subset(test)?))
    }

    pub fn check(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some((i, &l)) = self.labels().iter().enumerate().find(|(_, &l)| l >= self.classes()) {
            return Err(Error::Dataset(format!("label {l} of sample {i} exceeds {} classes", self.classes())));
        }
        Ok(())
    }
}
