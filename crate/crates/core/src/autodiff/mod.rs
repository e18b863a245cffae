//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The tape is rebuilt for every forward pass. Parameters enter it through
//! [`Tape::param`], data through [`Tape::constant`]; every primitive applied
//! to at least one tracked input is recorded and differentiated by
//! [`Tape::backward`].

mod adam;
mod gradcheck;
pub mod kernels;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig, OptimError};
pub use gradcheck::{finite_difference_gradient, relative_error};
pub use tape::{apply_primitive, Gradients, Primitive, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("expected rank-{expected} tensor, got shape {shape:?}")]
    RankMismatch { expected: usize, shape: Vec<usize> },
    #[error("invalid shape {0:?}: extents must be positive")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} does not match data length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op} takes {expected} inputs, got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{op}: argument {value} outside the domain (must be > 0)")]
    Domain { op: &'static str, value: f64 },
    #[error("{op}: row {row} has zero norm")]
    Degenerate { op: &'static str, row: usize },
    #[error("expected a single-element tensor, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("backward root was computed without gradient tracking")]
    Untracked,
}
