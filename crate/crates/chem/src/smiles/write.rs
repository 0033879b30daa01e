use std::collections::HashMap;

use crate::atoms::AtomTypeTable;
use crate::canon::canonical_ranks;
use crate::graph::{BondOrder, MolecularGraph};
use crate::smiles::parse::BARE_SYMBOLS;
use crate::{ChemError, Result};

/// Write a valid molecule as subset-SMILES. Traversal follows the canonical
/// labeling, so the output is deterministic across isomorphic inputs.
pub fn write(g: &MolecularGraph, table: &AtomTypeTable) -> Result<String> {
    if !g.is_valid(table) {
        return Err(ChemError::InvalidGraph(
            "cannot write an invalid molecule".into(),
        ));
    }
    let relabeled = g.permute(&canonical_ranks(g));
    let n = relabeled.node_count();
    let adj = relabeled.adjacency();

    // Depth-first spanning tree from the canonical-first node; edges to
    // already-visited non-parents become ring bonds.
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut ring_at: Vec<Vec<usize>> = vec![Vec::new(); n];
    {
        fn dfs(
            v: usize,
            parent: usize,
            adj: &[Vec<(usize, BondOrder)>],
            visited: &mut [bool],
            children: &mut [Vec<usize>],
            ring_at: &mut [Vec<usize>],
        ) {
            visited[v] = true;
            for &(u, _) in &adj[v] {
                if u == parent {
                    continue;
                }
                if visited[u] {
                    if !ring_at[v].contains(&u) {
                        ring_at[v].push(u);
                        ring_at[u].push(v);
                    }
                } else {
                    children[v].push(u);
                    dfs(u, v, adj, visited, children, ring_at);
                }
            }
        }
        let mut visited = vec![false; n];
        dfs(0, usize::MAX, &adj, &mut visited, &mut children, &mut ring_at);
        for list in ring_at.iter_mut() {
            list.sort_unstable();
        }
    }

    let mut out = String::new();
    let mut open_digits: HashMap<(usize, usize), u32> = HashMap::new();
    let mut in_use = [false; 100];
    emit(
        0,
        &relabeled,
        table,
        &children,
        &ring_at,
        &mut open_digits,
        &mut in_use,
        &mut out,
    )?;
    Ok(out)
}

fn bond_char(order: BondOrder) -> &'static str {
    match order {
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
    }
}

fn atom_token(g: &MolecularGraph, v: usize, table: &AtomTypeTable) -> Result<String> {
    let t = table.get(g.node_type(v))?;
    if t.charge == 0 && BARE_SYMBOLS.contains(&t.symbol.as_str()) {
        Ok(t.symbol.clone())
    } else {
        Ok(format!("[{}]", t.symbol))
    }
}

fn digit_token(d: u32) -> String {
    if d <= 9 {
        d.to_string()
    } else {
        format!("%{d:02}")
    }
}

#[allow(clippy::too_many_arguments)]
fn emit(
    v: usize,
    g: &MolecularGraph,
    table: &AtomTypeTable,
    children: &[Vec<usize>],
    ring_at: &[Vec<usize>],
    open_digits: &mut HashMap<(usize, usize), u32>,
    in_use: &mut [bool; 100],
    out: &mut String,
) -> Result<()> {
    out.push_str(&atom_token(g, v, table)?);
    for &other in &ring_at[v] {
        let key = (v.min(other), v.max(other));
        let order = g.edge_order(v, other).expect("ring bond exists");
        match open_digits.remove(&key) {
            Some(d) => {
                out.push_str(bond_char(order));
                out.push_str(&digit_token(d));
                in_use[d as usize] = false;
            }
            None => {
                let d = (1..100)
                    .find(|&d| !in_use[d as usize])
                    .ok_or_else(|| ChemError::InvalidGraph("too many open rings".into()))?;
                in_use[d as usize] = true;
                open_digits.insert(key, d);
                out.push_str(bond_char(order));
                out.push_str(&digit_token(d));
            }
        }
    }
    for (i, &child) in children[v].iter().enumerate() {
        let order = g.edge_order(v, child).expect("tree edge exists");
        let last = i + 1 == children[v].len();
        if !last {
            out.push('(');
        }
        out.push_str(bond_char(order));
        emit(child, g, table, children, ring_at, open_digits, in_use, out)?;
        if !last {
            out.push(')');
        }
    }
    Ok(())
}
