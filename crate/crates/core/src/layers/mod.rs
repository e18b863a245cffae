//! MLP building blocks: dense layers, batch norm, spectral norm and the two
//! critic heads.

mod batchnorm;
mod dense;
mod head;
mod network;
mod spectral;

pub use batchnorm::{batchnorm_forward, BatchNormLayer, BatchStats};
pub use dense::{dense_forward, DenseLayer};
pub use head::{critic_logit, CriticHead, HeadVariant};
pub use network::{build_network, ForwardPass, Layer, Mlp, NetworkSpec, Role};
pub use spectral::{spectral_normalize, SpectralNorm};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayerError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("{layer}: expected {expected} input features, got {got}")]
    InputWidth {
        layer: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("batch norm in training mode needs at least 2 samples, got {0}")]
    BatchTooSmall(usize),
    #[error("spectral normalization of an all-zero weight matrix")]
    ZeroWeight,
    #[error("cosine critic: feature vector {0} has zero norm")]
    DegenerateFeatures(usize),
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
    Tanh,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Result<Var, AutodiffError> {
        match self {
            Activation::Identity => Ok(x),
            Activation::Relu => tape.relu(x),
            Activation::LeakyRelu(slope) => tape.leaky_relu(x, slope),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// How a forward pass treats parameters and normalization state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mode {
    /// Record parameters as tracked leaves.
    pub track_params: bool,
    /// Batch norm uses batch statistics (and reports them) when set, running
    /// statistics otherwise.
    pub training: bool,
}

impl Mode {
    pub const TRAIN: Mode = Mode {
        track_params: true,
        training: true,
    };
    /// Training-mode statistics with frozen parameters, e.g. the
    /// discriminator during a generator update.
    pub const FROZEN_TRAIN: Mode = Mode {
        track_params: false,
        training: true,
    };
    pub const EVAL: Mode = Mode {
        track_params: false,
        training: false,
    };
}

pub(crate) fn leaf(tape: &mut Tape, value: &crate::autodiff::Tensor, track: bool) -> Var {
    if track {
        tape.param(value.clone())
    } else {
        tape.constant(value.clone())
    }
}
