//! Minimal reverse-mode automatic differentiation over dense f64 tensors.
//!
//! A [`Tape`] records forward operations eagerly and replays them in reverse
//! to compute gradients. The op set is exactly what a small graph-structured
//! model needs (matrix-vector products, gating nonlinearities, masked
//! softmax, a GRU cell) plus an [`Adam`] optimizer and a finite-difference
//! gradient checker. No broadcasting, no GPU, no operator fusion.

mod adam;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{grad_check, GradCheckReport, FD_STEP};
pub use params::{accumulate_grads, GradMap, ParamBindings, ParamStore};
pub use tape::{gru_cell, Gradients, GruWeights, NodeId, Tape, LOG_FLOOR};
pub use tensor::{glorot_matrix, glorot_vector, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op} expects {expected}, got shape {got:?}")]
    BadShape {
        op: &'static str,
        expected: &'static str,
        got: Vec<usize>,
    },
    #[error("index {index} out of bounds for shape {shape:?}")]
    IndexOutOfBounds { index: usize, shape: Vec<usize> },
    #[error("masked softmax: every entry is masked, no legal choice")]
    NoUnmaskedEntry,
    #[error("backward requires a scalar loss, got shape {got:?}")]
    NonScalarLoss { got: Vec<usize> },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("non-finite gradient for `{0}`, aborting update")]
    NonFiniteGradient(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
