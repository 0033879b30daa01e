use serde::{Deserialize, Serialize};

/// Architecture shape. Widths here fix every parameter shape, so a config
/// travels with its checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Latent width per node.
    pub latent_dim: usize,
    /// Number of atom types (one-hot width).
    pub num_types: usize,
    /// Message-passing rounds per state recomputation.
    pub rounds: usize,
    /// Hidden units of the edge-choice and label MLPs.
    pub hidden: usize,
    /// Distances 1..=max_dist get their own buckets, then one for "farther"
    /// and one for disconnected pairs.
    pub max_dist: usize,
    /// Feed the focus-to-candidate graph distance into edge features.
    /// Off reproduces ablation A.
    pub use_distance: bool,
    /// Score all edges once from the initial states and sample them
    /// independently (ablation B) instead of sequential decoding.
    pub independent_edges: bool,
    /// Keep decoder node states frozen at their initial values (ablation C).
    pub frozen_decoder_states: bool,
}

impl ModelConfig {
    pub fn new(latent_dim: usize, num_types: usize) -> Self {
        ModelConfig {
            latent_dim,
            num_types,
            rounds: 7,
            hidden: 200,
            max_dist: 8,
            use_distance: true,
            independent_edges: false,
            frozen_decoder_states: false,
        }
    }

    /// Node state width: [z, one-hot type].
    pub fn state_width(&self) -> usize {
        self.latent_dim + self.num_types
    }

    pub fn dist_buckets(&self) -> usize {
        if self.use_distance {
            self.max_dist + 2
        } else {
            0
        }
    }

    /// Width of the per-candidate edge feature vector
    /// [h_focus, h_candidate, distance one-hot, initial mean, current mean].
    pub fn phi_width(&self) -> usize {
        4 * self.state_width() + self.dist_buckets()
    }
}

/// The named ablations toggled from the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ablation {
    None,
    /// Drop the distance feature.
    A,
    /// Independent edge generation in one shot.
    B,
    /// No message passing in the decoder.
    C,
}

impl Ablation {
    pub fn apply(self, cfg: &mut ModelConfig) {
        match self {
            Ablation::None => {}
            Ablation::A => cfg.use_distance = false,
            Ablation::B => cfg.independent_edges = true,
            Ablation::C => cfg.frozen_decoder_states = true,
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Ablation::None),
            "A" | "a" => Ok(Ablation::A),
            "B" | "b" => Ok(Ablation::B),
            "C" | "c" => Ok(Ablation::C),
            other => Err(format!("unknown ablation `{other}` (expected A, B or C)")),
        }
    }
}
