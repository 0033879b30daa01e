use crate::graph::MolecularGraph;

pub const MIN_RING: usize = 3;
pub const MAX_RING: usize = 6;

/// Counts of simple cycles by length, 3 through 6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CycleCounts {
    counts: [u64; MAX_RING - MIN_RING + 1],
}

impl CycleCounts {
    pub fn get(&self, len: usize) -> u64 {
        assert!((MIN_RING..=MAX_RING).contains(&len));
        self.counts[len - MIN_RING]
    }

    fn bump(&mut self, len: usize) {
        self.counts[len - MIN_RING] += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        (MIN_RING..=MAX_RING).map(|l| (l, self.get(l)))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Count all simple cycles of length 3..=6, exactly.
///
/// Each cycle is found at its smallest vertex: paths grow through vertices
/// strictly greater than the anchor and a closure back to the anchor is
/// counted once per direction, so totals are halved.
pub fn count_cycles(g: &MolecularGraph) -> CycleCounts {
    let n = g.node_count();
    let adj = g.adjacency();
    let mut doubled = [0u64; MAX_RING - MIN_RING + 1];
    let mut path = Vec::with_capacity(MAX_RING);
    let mut on_path = vec![false; n];

    fn extend(
        anchor: usize,
        current: usize,
        adj: &[Vec<(usize, crate::graph::BondOrder)>],
        path: &mut Vec<usize>,
        on_path: &mut [bool],
        doubled: &mut [u64; MAX_RING - MIN_RING + 1],
    ) {
        for &(next, _) in &adj[current] {
            if next == anchor && path.len() >= MIN_RING {
                doubled[path.len() - MIN_RING] += 1;
            }
            if path.len() < MAX_RING && next > anchor && !on_path[next] {
                path.push(next);
                on_path[next] = true;
                extend(anchor, next, adj, path, on_path, doubled);
                on_path[next] = false;
                path.pop();
            }
        }
    }

    for anchor in 0..n {
        path.clear();
        path.push(anchor);
        on_path[anchor] = true;
        extend(anchor, anchor, &adj, &mut path, &mut on_path, &mut doubled);
        on_path[anchor] = false;
    }

    let mut counts = CycleCounts::default();
    for len in MIN_RING..=MAX_RING {
        let d = doubled[len - MIN_RING];
        debug_assert_eq!(d % 2, 0);
        for _ in 0..d / 2 {
            counts.bump(len);
        }
    }
    counts
}
