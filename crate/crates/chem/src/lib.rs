//! Molecular graph data model: typed nodes with valence accounting,
//! labelled undirected edges, implicit hydrogens, graph distance, cycle
//! counting, canonical keys and a kekulized SMILES subset codec.

mod atoms;
mod canon;
mod cycles;
mod graph;
pub mod jsonl;
pub mod smiles;
mod synth;

pub use atoms::{AtomType, AtomTypeTable, HYDROGEN_MASS};
pub use canon::{brute_force_isomorphic, canonical_key, canonical_ranks};
pub use cycles::{count_cycles, CycleCounts, MAX_RING, MIN_RING};
pub use graph::{BondLedger, BondOrder, Distance, Edge, GraphRecord, MolecularGraph};
pub use synth::{random_valid_graph, random_valid_graph_sized};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChemError {
    #[error("unknown atom symbol `{0}`")]
    UnknownSymbol(String),
    #[error("atom type index {0} out of range")]
    UnknownTypeIndex(usize),
    #[error("bond order {0} is not in 1..=3")]
    BadBondOrder(u8),
    #[error("self loop on node {node}")]
    SelfLoop { node: usize },
    #[error("duplicate edge between {u} and {v}")]
    DuplicateEdge { u: usize, v: usize },
    #[error("node {node} out of range (graph has {len})")]
    NodeOutOfRange { node: usize, len: usize },
    #[error("node {node} would use {used} bond units but its valence is {max}")]
    ValenceExceeded { node: usize, used: u8, max: u8 },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("SMILES error at byte {offset}: {message}")]
    Smiles { offset: usize, message: String },
    #[error("bad atom type table: {0}")]
    BadTypeTable(String),
    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, ChemError>;
