//! Seeded random streams, 2-D mixture samplers and IDX image ingestion.

mod idx;
mod mnist;
mod rng;
mod synthetic;

pub use idx::{parse_idx, serialize_idx, IdxData, IdxTensor, IdxType};
pub use mnist::{
    denormalize_images, denormalize_pixel, normalize_images, normalize_pixel, ImageDataset, RandomProjection,
    FEATURE_DIM, PROJECTION_SEED,
};
pub use rng::{RngState, RngStream, Substream, ALGORITHM};
pub use synthetic::{sample_latent, sample_real, SyntheticKind, SyntheticSpec, SPIRAL_MODES};

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tensor};
use crate::metrics::{MetricsError, ModeSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("invalid data spec: {0}")]
    InvalidSpec(String),
    #[error("requested an empty sample")]
    EmptyRequest,
    #[error("unknown rng algorithm {0:?}")]
    UnknownRngAlgorithm(String),
    #[error("bad idx magic at offset {offset}: {found:02x?}")]
    BadMagic { offset: usize, found: [u8; 4] },
    #[error("unknown idx element type 0x{code:02x} at offset {offset}")]
    UnknownElementType { offset: usize, code: u8 },
    #[error("truncated idx header: file ends at offset {offset}, header needs {expected_end} bytes")]
    TruncatedHeader { offset: usize, expected_end: usize },
    #[error("truncated idx payload: file ends at offset {offset}, expected end at {expected_end}")]
    TruncatedPayload { offset: usize, expected_end: usize },
    #[error("{extra} trailing bytes after idx payload end at offset {offset}")]
    TrailingBytes { offset: usize, extra: usize },
    #[error("expected u8 pixels, found {0:?}")]
    NotU8(IdxType),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("{0}")]
    Metrics(String),
}

impl From<MetricsError> for DataError {
    fn from(e: MetricsError) -> Self {
        DataError::Metrics(e.to_string())
    }
}

/// Source of real samples for training and evaluation.
#[derive(Clone, Debug)]
pub enum RealData {
    Synthetic(SyntheticSpec),
    Images(Box<ImageDataset>),
}

impl RealData {
    /// Width of one sample.
    pub fn dim(&self) -> usize {
        match self {
            RealData::Synthetic(_) => 2,
            RealData::Images(ds) => ds.pixel_dim(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Tensor, DataError> {
        match self {
            RealData::Synthetic(spec) => sample_real(spec, n, rng),
            RealData::Images(ds) => ds.sample(n, rng),
        }
    }

    /// Feature map used by the distance and classifier metrics.
    pub fn features(&self, x: &Tensor) -> Result<Tensor, DataError> {
        match self {
            RealData::Synthetic(_) => Ok(x.clone()),
            RealData::Images(ds) => ds.projection().project(x),
        }
    }

    pub fn mode_spec(&self, quality_radius: f64) -> Result<ModeSpec, DataError> {
        match self {
            RealData::Synthetic(spec) => spec.mode_spec(quality_radius),
            RealData::Images(ds) => ds.mode_spec(quality_radius),
        }
    }
}
