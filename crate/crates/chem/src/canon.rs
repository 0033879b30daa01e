use crate::graph::{BondOrder, MolecularGraph};

/// Canonical position of every node: isomorphic graphs produce the same
/// multiset of positions and the same [`canonical_key`].
///
/// Iterative neighborhood-refinement coloring; residual symmetry is broken
/// by individualizing each member of the first ambiguous cell and keeping
/// the lexicographically smallest resulting form.
pub fn canonical_ranks(g: &MolecularGraph) -> Vec<usize> {
    search(g).1
}

/// Byte string identifying the graph up to isomorphism (same atom types,
/// edge labels and structure give identical keys).
pub fn canonical_key(g: &MolecularGraph) -> Vec<u8> {
    search(g).0
}

type Adjacency = Vec<Vec<(usize, BondOrder)>>;

fn refine(g: &MolecularGraph, adj: &Adjacency, mut colors: Vec<u32>) -> Vec<u32> {
    loop {
        let mut sigs: Vec<(u32, Vec<(u8, u32)>)> = Vec::with_capacity(g.node_count());
        for v in 0..g.node_count() {
            let mut nbr: Vec<(u8, u32)> = adj[v]
                .iter()
                .map(|&(u, order)| (order.bonds(), colors[u]))
                .collect();
            nbr.sort_unstable();
            sigs.push((colors[v], nbr));
        }
        let mut sorted: Vec<&(u32, Vec<(u8, u32)>)> = sigs.iter().collect();
        sorted.sort();
        sorted.dedup();
        let next: Vec<u32> = sigs
            .iter()
            .map(|s| sorted.binary_search(&s).expect("own signature") as u32)
            .collect();
        let old_cells = distinct(&colors);
        let new_cells = distinct(&next);
        colors = next;
        if new_cells == old_cells {
            return colors;
        }
    }
}

fn distinct(colors: &[u32]) -> usize {
    let mut seen: Vec<u32> = colors.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

fn serialize(g: &MolecularGraph, ranks: &[usize]) -> Vec<u8> {
    let mut out = Vec::new();
    let n = g.node_count();
    out.extend_from_slice(&(n as u16).to_be_bytes());
    let mut by_rank = vec![0usize; n];
    for (node, &r) in ranks.iter().enumerate() {
        by_rank[r] = node;
    }
    for &node in &by_rank {
        out.extend_from_slice(&(g.node_type(node) as u16).to_be_bytes());
    }
    let mut edges: Vec<(u16, u16, u8)> = g
        .edges()
        .iter()
        .map(|e| {
            let (a, b) = (ranks[e.u] as u16, ranks[e.v] as u16);
            (a.min(b), a.max(b), e.order.bonds())
        })
        .collect();
    edges.sort_unstable();
    out.extend_from_slice(&(edges.len() as u16).to_be_bytes());
    for (a, b, l) in edges {
        out.extend_from_slice(&a.to_be_bytes());
        out.extend_from_slice(&b.to_be_bytes());
        out.push(l);
    }
    out
}

fn ranks_from_colors(colors: &[u32]) -> Option<Vec<usize>> {
    let n = colors.len();
    if distinct(colors) != n {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| colors[v]);
    let mut ranks = vec![0usize; n];
    for (pos, &node) in order.iter().enumerate() {
        ranks[node] = pos;
    }
    Some(ranks)
}

fn search(g: &MolecularGraph) -> (Vec<u8>, Vec<usize>) {
    let n = g.node_count();
    if n == 0 {
        return (serialize(g, &[]), Vec::new());
    }
    let adj = g.adjacency();
    let initial: Vec<u32> = g.types().iter().map(|&t| t as u32).collect();

    fn descend(
        g: &MolecularGraph,
        adj: &Adjacency,
        colors: Vec<u32>,
        best: &mut Option<(Vec<u8>, Vec<usize>)>,
    ) {
        let colors = refine(g, adj, colors);
        if let Some(ranks) = ranks_from_colors(&colors) {
            let key = serialize(g, &ranks);
            match best {
                Some((k, _)) if *k <= key => {}
                _ => *best = Some((key, ranks)),
            }
            return;
        }
        // first ambiguous cell, by color value
        let target = (0..colors.len() as u32)
            .map(|c| {
                (
                    c,
                    colors.iter().filter(|&&x| x == c).count(),
                )
            })
            .find(|&(_, size)| size > 1)
            .map(|(c, _)| c)
            .expect("non-discrete coloring has a multi-node cell");
        let fresh = colors.iter().max().unwrap() + 1;
        for v in 0..colors.len() {
            if colors[v] == target {
                let mut branch = colors.clone();
                branch[v] = fresh;
                descend(g, adj, branch, best);
            }
        }
    }

    let mut best = None;
    descend(g, &adj, initial, &mut best);
    best.expect("at least one branch reaches a discrete coloring")
}

/// Exhaustive isomorphism test for small graphs (test oracle for the key).
pub fn brute_force_isomorphic(a: &MolecularGraph, b: &MolecularGraph) -> bool {
    let n = a.node_count();
    if n != b.node_count() || a.edge_count() != b.edge_count() {
        return false;
    }
    if n > 9 {
        panic!("brute force check is for graphs of at most 9 nodes");
    }
    let mut perm: Vec<usize> = (0..n).collect();
    fn try_all(perm: &mut Vec<usize>, k: usize, a: &MolecularGraph, b: &MolecularGraph) -> bool {
        if k == perm.len() {
            return matches_under(perm, a, b);
        }
        for i in k..perm.len() {
            perm.swap(k, i);
            if try_all(perm, k + 1, a, b) {
                perm.swap(k, i);
                return true;
            }
            perm.swap(k, i);
        }
        false
    }
    fn matches_under(perm: &[usize], a: &MolecularGraph, b: &MolecularGraph) -> bool {
        for (v, &img) in perm.iter().enumerate() {
            if a.node_type(v) != b.node_type(img) {
                return false;
            }
        }
        for e in a.edges() {
            if b.edge_order(perm[e.u], perm[e.v]) != Some(e.order) {
                return false;
            }
        }
        true
    }
    try_all(&mut perm, 0, a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::AtomTypeTable;
    use rand::seq::SliceRandom;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn key_distinguishes_single_atoms() {
        let t = AtomTypeTable::qm9();
        let c = MolecularGraph::new(vec![t.index_of("C").unwrap()]);
        let o = MolecularGraph::new(vec![t.index_of("O").unwrap()]);
        assert_ne!(canonical_key(&c), canonical_key(&o));
    }

    #[test]
    fn ethanol_vs_dimethyl_ether() {
        let t = AtomTypeTable::qm9();
        let c = t.index_of("C").unwrap();
        let o = t.index_of("O").unwrap();
        // C-C-O
        let mut ethanol = MolecularGraph::new(vec![c, c, o]);
        ethanol.add_edge(0, 1, BondOrder::Single).unwrap();
        ethanol.add_edge(1, 2, BondOrder::Single).unwrap();
        // C-O-C
        let mut ether = MolecularGraph::new(vec![c, o, c]);
        ether.add_edge(0, 1, BondOrder::Single).unwrap();
        ether.add_edge(1, 2, BondOrder::Single).unwrap();

        assert!(!brute_force_isomorphic(&ethanol, &ether));
        assert_ne!(canonical_key(&ethanol), canonical_key(&ether));
    }

    #[test]
    fn key_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(1..=9);
            let mut g = MolecularGraph::new((0..n).map(|_| rng.gen_range(0..4)).collect());
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen_bool(0.35) {
                        let order = BondOrder::ALL[rng.gen_range(0..3)];
                        g.add_edge(u, v, order).unwrap();
                    }
                }
            }
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let permuted = g.permute(&perm);
            assert_eq!(
                canonical_key(&g),
                canonical_key(&permuted),
                "graph {g:?} perm {perm:?}"
            );
        }
    }

    #[test]
    fn distinct_keys_imply_non_isomorphic_on_small_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..60 {
            let n = rng.gen_range(2..=6);
            let mk = |rng: &mut ChaCha8Rng| {
                let mut g = MolecularGraph::new((0..n).map(|_| rng.gen_range(0..3)).collect());
                for u in 0..n {
                    for v in u + 1..n {
                        if rng.gen_bool(0.4) {
                            g.add_edge(u, v, BondOrder::Single).unwrap();
                        }
                    }
                }
                g
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            assert_eq!(
                canonical_key(&a) == canonical_key(&b),
                brute_force_isomorphic(&a, &b),
                "key/bruteforce disagree on {a:?} vs {b:?}"
            );
        }
    }

    #[test]
    fn ranks_relabel_to_identical_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let n = rng.gen_range(1..=8);
            let mut g = MolecularGraph::new((0..n).map(|_| rng.gen_range(0..4)).collect());
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen_bool(0.3) {
                        g.add_edge(u, v, BondOrder::Single).unwrap();
                    }
                }
            }
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let h = g.permute(&perm);
            assert_eq!(
                g.permute(&canonical_ranks(&g)),
                h.permute(&canonical_ranks(&h))
            );
        }
    }
}
