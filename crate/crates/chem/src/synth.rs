use rand::seq::SliceRandom;
use rand::Rng;

use crate::atoms::AtomTypeTable;
use crate::graph::{BondOrder, MolecularGraph};

/// Build a random connected molecule satisfying every valence exactly
/// (after hydrogen completion). Grows a random spanning tree under capacity
/// constraints, then sprinkles ring-closing edges.
pub fn random_valid_graph<R: Rng>(
    table: &AtomTypeTable,
    max_nodes: usize,
    rng: &mut R,
) -> MolecularGraph {
    let target = rng.gen_range(1..=max_nodes.max(1));
    random_valid_graph_sized(table, target, rng)
}

/// Like [`random_valid_graph`] but aiming for exactly `target` heavy atoms
/// (fewer only if every node saturates early).
pub fn random_valid_graph_sized<R: Rng>(
    table: &AtomTypeTable,
    target: usize,
    rng: &mut R,
) -> MolecularGraph {
    let target = target.max(1);
    let mut types: Vec<usize> = vec![rng.gen_range(0..table.len())];
    let mut remaining: Vec<u8> = vec![table.valence(types[0]).expect("type in table")];
    let mut edges: Vec<(usize, usize, BondOrder)> = Vec::new();

    while types.len() < target {
        let candidates: Vec<usize> = (0..types.len()).filter(|&u| remaining[u] >= 1).collect();
        let Some(&anchor) = candidates.choose(rng) else {
            break; // everything saturated; settle for a smaller molecule
        };
        let ty = rng.gen_range(0..table.len());
        let cap = table.valence(ty).expect("type in table");
        let max_order = remaining[anchor].min(cap).min(3);
        let order = rng.gen_range(1..=max_order);
        let node = types.len();
        types.push(ty);
        remaining.push(cap - order);
        remaining[anchor] -= order;
        edges.push((anchor, node, BondOrder::from_bonds(order).unwrap()));
    }

    let n = types.len();
    let has_edge = |edges: &[(usize, usize, BondOrder)], a: usize, b: usize| {
        edges
            .iter()
            .any(|&(u, v, _)| (u.min(v), u.max(v)) == (a.min(b), a.max(b)))
    };
    for _ in 0..rng.gen_range(0..=n) {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v || has_edge(&edges, u, v) || remaining[u] == 0 || remaining[v] == 0 {
            continue;
        }
        let max_order = remaining[u].min(remaining[v]).min(3);
        let order = rng.gen_range(1..=max_order);
        remaining[u] -= order;
        remaining[v] -= order;
        edges.push((u, v, BondOrder::from_bonds(order).unwrap()));
    }

    let mut g = MolecularGraph::new(types);
    for (u, v, order) in edges {
        g.add_edge(u, v, order).expect("synthesized edges are clean");
    }
    g.complete_hydrogens(table)
        .expect("capacity tracking keeps nodes under valence")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn always_produces_valid_molecules() {
        let t = AtomTypeTable::qm9();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let g = random_valid_graph(&t, 9, &mut rng);
            assert!(g.is_valid(&t), "{g:?}");
            assert!(g.node_count() <= 9);
        }
    }
}
