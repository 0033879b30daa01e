use std::collections::{HashSet, VecDeque};

use chem::{BondOrder, Edge, MolecularGraph};
use rand::Rng;

/// One decoder decision: grow an edge from the focus, or stop and close it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Edge { target: usize, order: BondOrder },
    Stop,
}

/// One supervised step: the state it was taken in (partial edge set, focus
/// node and closed set), every correct next decision at that state, and the
/// one this trace happened to take.
///
/// The closed set is part of the state because it feeds the masks: the same
/// (edges, focus) pair can be reached with different nodes already closed,
/// and the candidate distributions differ.
#[derive(Debug, Clone)]
pub struct Transition {
    pub focus: usize,
    pub edges_before: Vec<Edge>,
    /// Nodes already closed when this step was taken.
    pub closed_before: Vec<usize>,
    /// The valid expansions at this state: the focus's remaining dataset
    /// edges, or just Stop once none remain.
    pub candidates: Vec<Decision>,
    pub chosen: Decision,
}

/// One breadth-first generation trace of a dataset molecule.
#[derive(Debug, Clone)]
pub struct TraceSample {
    pub start: usize,
    pub transitions: Vec<Transition>,
}

impl TraceSample {
    /// Rebuild the graph this trace generates (types come from the source).
    pub fn replay(&self, types: Vec<usize>) -> MolecularGraph {
        let mut g = MolecularGraph::new(types);
        for t in &self.transitions {
            if let Decision::Edge { target, order } = t.chosen {
                g.add_edge(t.focus, target, order).expect("trace is clean");
            }
        }
        g
    }
}

struct Walk<'a> {
    adj: &'a [Vec<(usize, BondOrder)>],
    added: HashSet<(usize, usize)>,
    discovered: Vec<bool>,
    queue: VecDeque<usize>,
    edges: Vec<Edge>,
    closed: Vec<usize>,
    transitions: Vec<Transition>,
}

impl<'a> Walk<'a> {
    fn new(adj: &'a [Vec<(usize, BondOrder)>], start: usize) -> Self {
        let mut discovered = vec![false; adj.len()];
        discovered[start] = true;
        Walk {
            adj,
            added: HashSet::new(),
            discovered,
            queue: VecDeque::new(),
            edges: Vec::new(),
            closed: Vec::new(),
            transitions: Vec::new(),
        }
    }

    /// Dataset edges at `focus` not yet added, in neighbor order.
    fn remaining(&self, focus: usize) -> Vec<(usize, BondOrder)> {
        self.adj[focus]
            .iter()
            .filter(|&&(u, _)| !self.added.contains(&(focus.min(u), focus.max(u))))
            .copied()
            .collect()
    }

    fn candidates_of(remaining: &[(usize, BondOrder)]) -> Vec<Decision> {
        if remaining.is_empty() {
            vec![Decision::Stop]
        } else {
            remaining
                .iter()
                .map(|&(target, order)| Decision::Edge { target, order })
                .collect()
        }
    }

    fn fork(&self) -> Walk<'a> {
        Walk {
            adj: self.adj,
            added: self.added.clone(),
            discovered: self.discovered.clone(),
            queue: self.queue.clone(),
            edges: self.edges.clone(),
            closed: self.closed.clone(),
            transitions: self.transitions.clone(),
        }
    }

    fn record(&mut self, focus: usize, candidates: Vec<Decision>, chosen: Decision) {
        self.transitions.push(Transition {
            focus,
            edges_before: self.edges.clone(),
            closed_before: self.closed.clone(),
            candidates,
            chosen,
        });
        match chosen {
            Decision::Edge { target, order } => {
                self.added.insert((focus.min(target), focus.max(target)));
                self.edges.push(Edge {
                    u: focus.min(target),
                    v: focus.max(target),
                    order,
                });
                if !self.discovered[target] {
                    self.discovered[target] = true;
                    self.queue.push_back(target);
                }
            }
            Decision::Stop => self.closed.push(focus),
        }
    }
}

/// Extract one random breadth-first trace: uniform start node, FIFO focus
/// order, uniformly random order among the focus node's remaining edges,
/// and an explicit stop step per node. A connected graph with E edges and N
/// nodes yields exactly E + N transitions.
pub fn extract_trace<R: Rng>(g: &MolecularGraph, rng: &mut R) -> TraceSample {
    let adj = g.adjacency();
    let start = rng.gen_range(0..g.node_count());
    let mut walk = Walk::new(&adj, start);
    let mut focus = Some(start);
    while let Some(f) = focus {
        loop {
            let remaining = walk.remaining(f);
            let candidates = Walk::candidates_of(&remaining);
            if remaining.is_empty() {
                walk.record(f, candidates, Decision::Stop);
                break;
            }
            let (target, order) = remaining[rng.gen_range(0..remaining.len())];
            walk.record(f, candidates, Decision::Edge { target, order });
        }
        focus = walk.queue.pop_front();
    }
    TraceSample {
        start,
        transitions: walk.transitions,
    }
}

pub fn extract_traces<R: Rng>(g: &MolecularGraph, k: usize, rng: &mut R) -> Vec<TraceSample> {
    (0..k.max(1)).map(|_| extract_trace(g, rng)).collect()
}

/// Enumerate every breadth-first trace of `g` together with its probability
/// under the extraction process (uniform start, uniform tie-breaking among
/// remaining edges). Weights sum to one. Exponential in graph size; meant
/// for small oracle graphs.
pub fn enumerate_weighted_traces(g: &MolecularGraph) -> Vec<(TraceSample, f64)> {
    let adj = g.adjacency();
    let n = g.node_count();
    let mut out = Vec::new();
    for start in 0..n {
        let walk = Walk::new(&adj, start);
        descend(walk, Some(start), start, 1.0 / n as f64, &mut out);
    }
    out
}

fn descend(
    walk: Walk<'_>,
    focus: Option<usize>,
    start: usize,
    weight: f64,
    out: &mut Vec<(TraceSample, f64)>,
) {
    let Some(f) = focus else {
        out.push((
            TraceSample {
                start,
                transitions: walk.transitions,
            },
            weight,
        ));
        return;
    };
    let remaining = walk.remaining(f);
    let candidates = Walk::candidates_of(&remaining);
    if remaining.is_empty() {
        let mut next = walk.fork();
        next.record(f, candidates, Decision::Stop);
        let focus = next.queue.pop_front();
        descend(next, focus, start, weight, out);
        return;
    }
    let share = weight / remaining.len() as f64;
    for &(target, order) in &remaining {
        let mut next = walk.fork();
        next.record(f, candidates.clone(), Decision::Edge { target, order });
        descend(next, Some(f), start, share, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chem::{canonical_key, AtomTypeTable};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table() -> AtomTypeTable {
        AtomTypeTable::qm9()
    }

    #[test]
    fn single_edge_from_a() {
        let t = table();
        let c = t.index_of("C").unwrap();
        let mut g = MolecularGraph::new(vec![c, c]);
        g.add_edge(0, 1, BondOrder::Single).unwrap();

        // keep drawing until the random start is node 0
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = loop {
            let tr = extract_trace(&g, &mut rng);
            if tr.start == 0 {
                break tr;
            }
        };
        assert_eq!(trace.transitions.len(), 3, "E = edges + nodes = 1 + 2");
        assert_eq!(
            trace.transitions[0].chosen,
            Decision::Edge {
                target: 1,
                order: BondOrder::Single
            }
        );
        assert_eq!(trace.transitions[0].focus, 0);
        assert_eq!(trace.transitions[1].chosen, Decision::Stop);
        assert_eq!(trace.transitions[1].focus, 0);
        assert_eq!(trace.transitions[2].chosen, Decision::Stop);
        assert_eq!(trace.transitions[2].focus, 1);
    }

    #[test]
    fn single_node_is_one_stop() {
        let t = table();
        let g = MolecularGraph::new(vec![t.index_of("C").unwrap()]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let trace = extract_trace(&g, &mut rng);
        assert_eq!(trace.transitions.len(), 1);
        assert_eq!(trace.transitions[0].chosen, Decision::Stop);
    }

    #[test]
    fn replay_rebuilds_the_triangle() {
        let t = table();
        let c = t.index_of("C").unwrap();
        let mut g = MolecularGraph::new(vec![c; 3]);
        g.add_edge(0, 1, BondOrder::Single).unwrap();
        g.add_edge(1, 2, BondOrder::Single).unwrap();
        g.add_edge(0, 2, BondOrder::Single).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let trace = extract_trace(&g, &mut rng);
            let rebuilt = trace.replay(g.types().to_vec());
            assert_eq!(canonical_key(&rebuilt), canonical_key(&g));
            assert_eq!(rebuilt.edges(), g.edges());
            assert_eq!(trace.transitions.len(), 6, "3 edges + 3 stops");
        }
    }

    #[test]
    fn transition_count_is_edges_plus_nodes() {
        let t = table();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let g = chem::random_valid_graph(&t, 8, &mut rng);
            let trace = extract_trace(&g, &mut rng);
            assert_eq!(
                trace.transitions.len(),
                g.edge_count() + g.node_count(),
                "{g:?}"
            );
        }
    }

    #[test]
    fn enumeration_weights_sum_to_one() {
        let t = table();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let g = chem::random_valid_graph(&t, 5, &mut rng);
            if g.edge_count() > 4 {
                continue;
            }
            let traces = enumerate_weighted_traces(&g);
            let total: f64 = traces.iter().map(|(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-12, "weights sum to {total}");
            for (trace, _) in &traces {
                assert_eq!(trace.replay(g.types().to_vec()).edges(), g.edges());
            }
        }
    }
}
