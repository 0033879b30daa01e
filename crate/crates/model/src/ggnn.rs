use autodiff::{gru_cell, NodeId, Tape, Tensor};
use chem::BondOrder;

use crate::params::GgnnWeights;
use crate::Result;

/// Run message passing over the given adjacency for `rounds` steps, starting
/// from the nodes' initial states, and return the final per-node states.
///
/// A master node with its own learned initial state is connected to every
/// working node through a dedicated transform; it relays global information
/// but is not part of the returned states. States are recomputed from the
/// initial values on every call, so the result depends only on the edge set,
/// not on the order edges were inserted.
pub fn propagate(
    tape: &mut Tape,
    weights: &GgnnWeights,
    rounds: usize,
    init: &[NodeId],
    adjacency: &[Vec<(usize, BondOrder)>],
) -> Result<Vec<NodeId>> {
    debug_assert_eq!(init.len(), adjacency.len());
    let n = init.len();
    let mut states = init.to_vec();
    let mut master = weights.master_init;
    let width = tape.value(master).numel();

    for _ in 0..rounds {
        let mut incoming: Vec<NodeId> = Vec::with_capacity(n);
        for v in 0..n {
            // adjacency lists are sorted by neighbor, so this sum does not
            // depend on edge insertion order
            let mut parts: Vec<NodeId> = Vec::with_capacity(adjacency[v].len() + 1);
            for &(u, order) in &adjacency[v] {
                let transform = weights.edge[order.bonds() as usize - 1];
                parts.push(tape.matvec(transform, states[u])?);
            }
            parts.push(tape.matvec(weights.master, master)?);
            incoming.push(tape.add_n(&parts)?);
        }
        let master_in = if n == 0 {
            tape.leaf(Tensor::zeros(&[width]))
        } else {
            let parts: Vec<NodeId> = states
                .iter()
                .map(|&s| tape.matvec(weights.master, s))
                .collect::<std::result::Result<_, autodiff::AutodiffError>>()?;
            tape.add_n(&parts)?
        };

        let mut next = Vec::with_capacity(n);
        for v in 0..n {
            next.push(gru_cell(tape, &weights.gru, incoming[v], states[v])?);
        }
        master = gru_cell(tape, &weights.gru, master_in, master)?;
        states = next;
    }
    Ok(states)
}
