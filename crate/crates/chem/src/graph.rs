use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::atoms::{AtomTypeTable, HYDROGEN_MASS};
use crate::{ChemError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
}

impl BondOrder {
    pub const ALL: [BondOrder; 3] = [BondOrder::Single, BondOrder::Double, BondOrder::Triple];

    /// Bond units this order consumes at each endpoint.
    pub fn bonds(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub fn from_bonds(n: u8) -> Result<Self> {
        match n {
            1 => Ok(BondOrder::Single),
            2 => Ok(BondOrder::Double),
            3 => Ok(BondOrder::Triple),
            _ => Err(ChemError::BadBondOrder(n)),
        }
    }
}

/// Undirected labelled edge, stored with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub order: BondOrder,
}

/// BFS hop count between two nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distance {
    Hops(u32),
    Disconnected,
}

/// Heavy-atom molecular graph: typed nodes, labelled undirected edges and an
/// implicit-hydrogen count per node. Partial graphs (mid-generation) carry
/// zero hydrogens until completed.
#[derive(Debug, Clone, PartialEq)]
pub struct MolecularGraph {
    types: Vec<usize>,
    edges: Vec<Edge>,
    hydrogens: Vec<u8>,
}

impl MolecularGraph {
    pub fn new(types: Vec<usize>) -> Self {
        let n = types.len();
        MolecularGraph {
            types,
            edges: Vec::new(),
            hydrogens: vec![0; n],
        }
    }

    pub fn node_count(&self) -> usize {
        self.types.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_type(&self, v: usize) -> usize {
        self.types[v]
    }

    pub fn types(&self) -> &[usize] {
        &self.types
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn hydrogens(&self) -> &[u8] {
        &self.hydrogens
    }

    pub fn hydrogen_count(&self, v: usize) -> u8 {
        self.hydrogens[v]
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v >= self.types.len() {
            return Err(ChemError::NodeOutOfRange {
                node: v,
                len: self.types.len(),
            });
        }
        Ok(())
    }

    /// Insert an undirected edge. Rejects self loops and duplicates.
    pub fn add_edge(&mut self, a: usize, b: usize, order: BondOrder) -> Result<()> {
        self.check_node(a)?;
        self.check_node(b)?;
        if a == b {
            return Err(ChemError::SelfLoop { node: a });
        }
        let (u, v) = (a.min(b), a.max(b));
        let probe = self
            .edges
            .binary_search_by(|e| (e.u, e.v).cmp(&(u, v)));
        match probe {
            Ok(_) => Err(ChemError::DuplicateEdge { u, v }),
            Err(pos) => {
                self.edges.insert(pos, Edge { u, v, order });
                Ok(())
            }
        }
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let (u, v) = (a.min(b), a.max(b));
        self.edges
            .binary_search_by(|e| (e.u, e.v).cmp(&(u, v)))
            .is_ok()
    }

    pub fn edge_order(&self, a: usize, b: usize) -> Option<BondOrder> {
        let (u, v) = (a.min(b), a.max(b));
        self.edges
            .binary_search_by(|e| (e.u, e.v).cmp(&(u, v)))
            .ok()
            .map(|i| self.edges[i].order)
    }

    /// Neighbor lists sorted by neighbor index; summations over these are
    /// insertion-order independent.
    pub fn adjacency(&self) -> Vec<Vec<(usize, BondOrder)>> {
        let mut adj = vec![Vec::new(); self.types.len()];
        for e in &self.edges {
            adj[e.u].push((e.v, e.order));
            adj[e.v].push((e.u, e.order));
        }
        for nbrs in adj.iter_mut() {
            nbrs.sort_unstable();
        }
        adj
    }

    /// Bond units used at each node (sum of incident edge orders).
    pub fn bond_usage(&self) -> Vec<u8> {
        let mut used = vec![0u8; self.types.len()];
        for e in &self.edges {
            used[e.u] += e.order.bonds();
            used[e.v] += e.order.bonds();
        }
        used
    }

    /// BFS distances from `v` to every node.
    pub fn distances_from(&self, v: usize) -> Vec<Distance> {
        let mut dist = vec![Distance::Disconnected; self.types.len()];
        if v >= self.types.len() {
            return dist;
        }
        let adj = self.adjacency();
        let mut queue = VecDeque::new();
        dist[v] = Distance::Hops(0);
        queue.push_back(v);
        while let Some(u) = queue.pop_front() {
            let Distance::Hops(du) = dist[u] else {
                unreachable!()
            };
            for &(w, _) in &adj[u] {
                if dist[w] == Distance::Disconnected {
                    dist[w] = Distance::Hops(du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Shortest-path edge count between two nodes.
    pub fn graph_distance(&self, u: usize, v: usize) -> Distance {
        if u == v && u < self.types.len() {
            return Distance::Hops(0);
        }
        self.distances_from(u)
            .get(v)
            .copied()
            .unwrap_or(Distance::Disconnected)
    }

    pub fn is_connected(&self) -> bool {
        if self.types.is_empty() {
            return false;
        }
        self.distances_from(0)
            .iter()
            .all(|d| *d != Distance::Disconnected)
    }

    /// Keep only the flagged nodes, reindexing densely. Returns the new
    /// graph and, per old node, its new index.
    pub fn keep_nodes(&self, keep: &[bool]) -> (MolecularGraph, Vec<Option<usize>>) {
        let mut remap = vec![None; self.types.len()];
        let mut types = Vec::new();
        let mut hydrogens = Vec::new();
        for v in 0..self.types.len() {
            if keep[v] {
                remap[v] = Some(types.len());
                types.push(self.types[v]);
                hydrogens.push(self.hydrogens[v]);
            }
        }
        let mut g = MolecularGraph {
            types,
            edges: Vec::new(),
            hydrogens,
        };
        for e in &self.edges {
            if let (Some(u), Some(v)) = (remap[e.u], remap[e.v]) {
                g.add_edge(u, v, e.order).expect("clean subset of edges");
            }
        }
        (g, remap)
    }

    /// Relabel nodes: old index `i` becomes `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> MolecularGraph {
        assert_eq!(perm.len(), self.types.len());
        let mut types = vec![0; self.types.len()];
        let mut hydrogens = vec![0; self.types.len()];
        for (old, &new) in perm.iter().enumerate() {
            types[new] = self.types[old];
            hydrogens[new] = self.hydrogens[old];
        }
        let mut g = MolecularGraph {
            types,
            edges: Vec::new(),
            hydrogens,
        };
        for e in &self.edges {
            g.add_edge(perm[e.u], perm[e.v], e.order)
                .expect("permutation preserves edges");
        }
        g
    }

    /// Set each node's implicit hydrogens to its remaining valence. Errors
    /// if any node already exceeds its capacity.
    pub fn complete_hydrogens(&self, table: &AtomTypeTable) -> Result<MolecularGraph> {
        let used = self.bond_usage();
        let mut out = self.clone();
        for v in 0..self.types.len() {
            let cap = table.valence(self.types[v])?;
            if used[v] > cap {
                return Err(ChemError::ValenceExceeded {
                    node: v,
                    used: used[v],
                    max: cap,
                });
            }
            out.hydrogens[v] = cap - used[v];
        }
        Ok(out)
    }

    /// Hydrogen completion that clamps over-full nodes to zero instead of
    /// erroring; for scoring generators that cannot guarantee valence.
    pub fn complete_hydrogens_clamped(&self, table: &AtomTypeTable) -> Result<MolecularGraph> {
        let used = self.bond_usage();
        let mut out = self.clone();
        for v in 0..self.types.len() {
            let cap = table.valence(self.types[v])?;
            out.hydrogens[v] = cap.saturating_sub(used[v]);
        }
        Ok(out)
    }

    /// A completed molecule: connected, and every node's bonds plus
    /// hydrogens exactly meet its valence.
    pub fn is_valid(&self, table: &AtomTypeTable) -> bool {
        if self.types.is_empty() || !self.is_connected() {
            return false;
        }
        let used = self.bond_usage();
        for v in 0..self.types.len() {
            let Ok(cap) = table.valence(self.types[v]) else {
                return false;
            };
            if used[v] + self.hydrogens[v] != cap {
                return false;
            }
        }
        true
    }

    /// Isotope-averaged molecular weight including implicit hydrogens.
    pub fn molecular_weight(&self, table: &AtomTypeTable) -> Result<f64> {
        let mut total = 0.0;
        for v in 0..self.types.len() {
            total += table.get(self.types[v])?.mass;
            total += self.hydrogens[v] as f64 * HYDROGEN_MASS;
        }
        Ok(total)
    }

    /// N/O atoms carrying at least one implicit hydrogen.
    pub fn h_donor_count(&self, table: &AtomTypeTable) -> Result<usize> {
        let mut count = 0;
        for v in 0..self.types.len() {
            let t = table.get(self.types[v])?;
            if (t.element == "N" || t.element == "O") && self.hydrogens[v] > 0 {
                count += 1;
            }
        }
        Ok(count)
    }

    /// N/O atoms (lone-pair carriers).
    pub fn h_acceptor_count(&self, table: &AtomTypeTable) -> Result<usize> {
        let mut count = 0;
        for v in 0..self.types.len() {
            let t = table.get(self.types[v])?;
            if t.element == "N" || t.element == "O" {
                count += 1;
            }
        }
        Ok(count)
    }
}

/// Per-node bond bookkeeping during generation: units used, capacity, and
/// whether the node is closed to further edges.
#[derive(Debug, Clone)]
pub struct BondLedger {
    used: Vec<u8>,
    capacity: Vec<u8>,
    closed: Vec<bool>,
}

impl BondLedger {
    pub fn for_types(types: &[usize], table: &AtomTypeTable) -> Result<Self> {
        let capacity: Result<Vec<u8>> = types.iter().map(|&t| table.valence(t)).collect();
        let capacity = capacity?;
        Ok(BondLedger {
            used: vec![0; types.len()],
            capacity,
            closed: vec![false; types.len()],
        })
    }

    pub fn from_graph(g: &MolecularGraph, table: &AtomTypeTable) -> Result<Self> {
        let mut ledger = Self::for_types(g.types(), table)?;
        for e in g.edges() {
            ledger.add_bond(e.u, e.v, e.order)?;
        }
        Ok(ledger)
    }

    pub fn len(&self) -> usize {
        self.used.len()
    }

    pub fn is_empty(&self) -> bool {
        self.used.is_empty()
    }

    pub fn used(&self, v: usize) -> u8 {
        self.used[v]
    }

    pub fn capacity(&self, v: usize) -> u8 {
        self.capacity[v]
    }

    pub fn remaining(&self, v: usize) -> u8 {
        self.capacity[v] - self.used[v]
    }

    pub fn is_closed(&self, v: usize) -> bool {
        self.closed[v]
    }

    pub fn close(&mut self, v: usize) {
        self.closed[v] = true;
    }

    pub fn add_bond(&mut self, u: usize, v: usize, order: BondOrder) -> Result<()> {
        let units = order.bonds();
        for node in [u, v] {
            if self.used[node] + units > self.capacity[node] {
                return Err(ChemError::ValenceExceeded {
                    node,
                    used: self.used[node] + units,
                    max: self.capacity[node],
                });
            }
        }
        self.used[u] += units;
        self.used[v] += units;
        Ok(())
    }
}

/// One molecule as a JSONL dataset record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphRecord {
    pub nodes: Vec<String>,
    pub edges: Vec<(usize, usize, u8)>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub props: BTreeMap<String, f64>,
}

impl GraphRecord {
    pub fn from_graph(g: &MolecularGraph, table: &AtomTypeTable) -> Result<Self> {
        let nodes: Result<Vec<String>> = g
            .types()
            .iter()
            .map(|&t| Ok(table.symbol(t)?.to_string()))
            .collect();
        Ok(GraphRecord {
            nodes: nodes?,
            edges: g
                .edges()
                .iter()
                .map(|e| (e.u, e.v, e.order.bonds()))
                .collect(),
            props: BTreeMap::new(),
        })
    }

    /// Rebuild the graph, recomputing implicit hydrogens.
    pub fn to_graph(&self, table: &AtomTypeTable) -> Result<MolecularGraph> {
        let types: Result<Vec<usize>> = self.nodes.iter().map(|s| table.index_of(s)).collect();
        let mut g = MolecularGraph::new(types?);
        for &(u, v, l) in &self.edges {
            g.add_edge(u, v, BondOrder::from_bonds(l)?)?;
        }
        g.complete_hydrogens(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> AtomTypeTable {
        AtomTypeTable::qm9()
    }

    fn carbon_chain(n: usize, table: &AtomTypeTable) -> MolecularGraph {
        let c = table.index_of("C").unwrap();
        let mut g = MolecularGraph::new(vec![c; n]);
        for i in 1..n {
            g.add_edge(i - 1, i, BondOrder::Single).unwrap();
        }
        g
    }

    #[test]
    fn distance_basics() {
        let t = table();
        let g = carbon_chain(3, &t);
        assert_eq!(g.graph_distance(0, 0), Distance::Hops(0));
        assert_eq!(g.graph_distance(0, 2), Distance::Hops(2));
        let iso = MolecularGraph::new(vec![0, 0]);
        assert_eq!(iso.graph_distance(0, 1), Distance::Disconnected);
    }

    #[test]
    fn distance_symmetric_and_triangle() {
        let t = table();
        let mut g = carbon_chain(5, &t);
        g.add_edge(0, 4, BondOrder::Single).unwrap();
        for u in 0..5 {
            for v in 0..5 {
                assert_eq!(g.graph_distance(u, v), g.graph_distance(v, u));
                for w in 0..5 {
                    let (Distance::Hops(duv), Distance::Hops(duw), Distance::Hops(dwv)) = (
                        g.graph_distance(u, v),
                        g.graph_distance(u, w),
                        g.graph_distance(w, v),
                    ) else {
                        panic!("connected graph");
                    };
                    assert!(duv <= duw + dwv);
                }
            }
        }
    }

    #[test]
    fn no_self_loops_or_duplicates() {
        let t = table();
        let mut g = carbon_chain(2, &t);
        assert!(matches!(
            g.add_edge(1, 1, BondOrder::Single),
            Err(ChemError::SelfLoop { .. })
        ));
        assert!(matches!(
            g.add_edge(1, 0, BondOrder::Double),
            Err(ChemError::DuplicateEdge { .. })
        ));
    }

    #[test]
    fn hydrogen_completion() {
        let t = table();
        // lone O -> 2 implicit hydrogens
        let o = t.index_of("O").unwrap();
        let g = MolecularGraph::new(vec![o]).complete_hydrogens(&t).unwrap();
        assert_eq!(g.hydrogen_count(0), 2);

        // O with one single bond -> 1 hydrogen
        let c = t.index_of("C").unwrap();
        let mut g = MolecularGraph::new(vec![c, o]);
        g.add_edge(0, 1, BondOrder::Single).unwrap();
        let g = g.complete_hydrogens(&t).unwrap();
        assert_eq!(g.hydrogen_count(1), 1);
        assert_eq!(g.hydrogen_count(0), 3);

        // C with one double and two single bonds -> 0 hydrogens
        let mut g = MolecularGraph::new(vec![c, o, c, c]);
        g.add_edge(0, 1, BondOrder::Double).unwrap();
        g.add_edge(0, 2, BondOrder::Single).unwrap();
        g.add_edge(0, 3, BondOrder::Single).unwrap();
        let g = g.complete_hydrogens(&t).unwrap();
        assert_eq!(g.hydrogen_count(0), 0);
    }

    #[test]
    fn hydrogen_completion_rejects_overfull_nodes() {
        let t = table();
        let o = t.index_of("O").unwrap();
        let c = t.index_of("C").unwrap();
        let mut g = MolecularGraph::new(vec![o, c, c]);
        g.add_edge(0, 1, BondOrder::Double).unwrap();
        g.add_edge(0, 2, BondOrder::Double).unwrap();
        assert!(matches!(
            g.complete_hydrogens(&t),
            Err(ChemError::ValenceExceeded { node: 0, .. })
        ));
        let clamped = g.complete_hydrogens_clamped(&t).unwrap();
        assert_eq!(clamped.hydrogen_count(0), 0);
        assert!(!clamped.is_valid(&t));
    }

    #[test]
    fn validity() {
        let t = table();
        // methane-like single carbon
        let c = t.index_of("C").unwrap();
        let g = MolecularGraph::new(vec![c]).complete_hydrogens(&t).unwrap();
        assert!(g.is_valid(&t));

        // two disconnected valid fragments are not a valid sample
        let g2 = MolecularGraph::new(vec![c, c]).complete_hydrogens(&t).unwrap();
        assert!(!g2.is_valid(&t));

        // empty graph
        assert!(!MolecularGraph::new(vec![]).is_valid(&t));
    }

    #[test]
    fn weight_and_hbond_counts() {
        let t = table();
        let c = t.index_of("C").unwrap();
        let o = t.index_of("O").unwrap();

        let methane = MolecularGraph::new(vec![c]).complete_hydrogens(&t).unwrap();
        assert!((methane.molecular_weight(&t).unwrap() - 16.043).abs() < 0.01);

        let water = MolecularGraph::new(vec![o]).complete_hydrogens(&t).unwrap();
        assert_eq!(water.h_donor_count(&t).unwrap(), 1);
        assert_eq!(water.h_acceptor_count(&t).unwrap(), 1);

        let empty = MolecularGraph::new(vec![]);
        assert_eq!(empty.molecular_weight(&t).unwrap(), 0.0);
        assert_eq!(empty.h_donor_count(&t).unwrap(), 0);
    }

    #[test]
    fn ledger_tracks_capacity() {
        let t = table();
        let o = t.index_of("O").unwrap();
        let c = t.index_of("C").unwrap();
        let mut ledger = BondLedger::for_types(&[o, c], &t).unwrap();
        ledger.add_bond(0, 1, BondOrder::Single).unwrap();
        assert_eq!(ledger.used(0), 1);
        assert_eq!(ledger.remaining(0), 1);
        assert!(ledger.add_bond(0, 1, BondOrder::Double).is_err());
        assert_eq!(ledger.used(0), 1, "failed add must not mutate");
    }

    #[test]
    fn record_round_trip() {
        let t = table();
        let c = t.index_of("C").unwrap();
        let o = t.index_of("O").unwrap();
        let mut g = MolecularGraph::new(vec![c, c, o]);
        g.add_edge(0, 1, BondOrder::Single).unwrap();
        g.add_edge(1, 2, BondOrder::Double).unwrap();
        let g = g.complete_hydrogens(&t).unwrap();

        let rec = GraphRecord::from_graph(&g, &t).unwrap();
        let json = serde_json::to_string(&rec).unwrap();
        let back: GraphRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_graph(&t).unwrap(), g);
    }
}
