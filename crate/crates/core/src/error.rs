use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: invalid geometry: {reason}")]
    Geometry { op: &'static str, reason: String },

    #[error("{op}: index {index} at position {position} is out of range 0..{bound}")]
    IndexOutOfRange {
        op: &'static str,
        position: usize,
        index: usize,
        bound: usize,
    },

    #[error("{op}: axis {axis} is empty or out of range")]
    EmptyAxis { op: &'static str, axis: usize },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("diverged during {context}: loss = {loss}")]
    Divergence { context: String, loss: f64 },

    #[error("build failed at {boundary}: {reason}")]
    Build { boundary: String, reason: String },

    #[error("variant `{0}` requires an autoencoder bundle")]
    MissingBundle(String),

    #[error("invalid stub: {0}")]
    Stub(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{format} format error at byte {offset}: {reason}")]
    Format {
        format: &'static str,
        offset: u64,
        reason: String,
    },

    #[error("{format}: unsupported version {found} (expected {expected})")]
    Version {
        format: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("{format}: checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum {
        format: &'static str,
        stored: u32,
        computed: u32,
    },

    #[error("{format}: record {record} at byte {offset}: label {label} is out of range for {classes} classes")]
    LabelOutOfRange {
        format: &'static str,
        record: usize,
        offset: u64,
        label: usize,
        classes: usize,
    },

    #[error("{0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
