//! Graph variational autoencoder for molecules: a message-passing encoder
//! to per-node Gaussian latents, a masked sequential decoder that grows
//! valid molecular graphs edge by edge, trace-based training, latent-space
//! property optimization, and sample-set evaluation metrics.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod decoder;
pub mod encoder;
pub mod ggnn;
pub mod masking;
pub mod metrics;
pub mod params;
pub mod propopt;
pub mod trace;
pub mod training;

pub use checkpoint::Checkpoint;
pub use config::{Ablation, ModelConfig};
pub use dataset::{Dataset, PropertyNorm, SizePolicy};
pub use training::{train, TrainConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] autodiff::AutodiffError),
    #[error(transparent)]
    Chem(#[from] chem::ChemError),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("node type {type_index} out of range ({num_types} types configured)")]
    TypeOutOfRange {
        type_index: usize,
        num_types: usize,
    },
    #[error("atom table has {table} types but the model is configured for {config}")]
    TableMismatch { table: usize, config: usize },
    #[error("no focus node; generation already terminated")]
    NoFocus,
    #[error("teacher edge from focus {focus} to {target} is masked; training data is inconsistent with the masks")]
    TeacherEdgeMasked { focus: usize, target: usize },
    #[error("trace expects focus {expected} but the state focus is {got:?}")]
    TraceMismatch { expected: usize, got: Option<usize> },
    #[error("dataset is empty: {0}")]
    EmptyDataset(String),
    #[error("unknown property `{0}`")]
    UnknownProperty(String),
    #[error("non-finite loss {value} at epoch {epoch}, graph {graph}")]
    NonFiniteLoss {
        epoch: usize,
        graph: usize,
        value: f64,
    },
    #[error("sample set is empty")]
    EmptySampleSet,
    #[error("{0}")]
    SchemaMismatch(String),
    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable per-purpose seed derivation, so every random stream (init,
/// shuffles, traces, sampling) is a pure function of the root seed.
pub fn derive_seed(root: u64, stream: u64, index: u64) -> u64 {
    splitmix64(root ^ splitmix64(stream ^ splitmix64(index)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_across_streams() {
        let a = derive_seed(7, 0, 0);
        let b = derive_seed(7, 1, 0);
        let c = derive_seed(7, 0, 1);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, 0, 0));
    }
}
