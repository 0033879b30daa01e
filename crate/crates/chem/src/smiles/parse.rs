use std::collections::{HashMap, HashSet};

use crate::atoms::AtomTypeTable;
use crate::graph::{BondOrder, MolecularGraph};
use crate::{ChemError, Result};

/// Symbols that may appear without brackets.
pub(crate) const BARE_SYMBOLS: [&str; 10] = ["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"];

fn err(offset: usize, message: impl Into<String>) -> ChemError {
    ChemError::Smiles {
        offset,
        message: message.into(),
    }
}

/// Parse a kekulized subset-SMILES string into a heavy-atom graph with
/// implicit hydrogens completed.
///
/// The subset: bare or bracketed atoms from the type table (brackets carry
/// charge, e.g. `[O-]`), bonds `-`, `=`, `#`, branches, and ring closures
/// (`1`..`9`, `%nn`). No aromatic lowercase forms, stereo markers or
/// isotopes.
pub fn parse(smiles: &str, table: &AtomTypeTable) -> Result<MolecularGraph> {
    let bytes = smiles.as_bytes();
    let mut i = 0usize;

    let mut types: Vec<usize> = Vec::new();
    let mut offsets: Vec<usize> = Vec::new();
    let mut edges: Vec<(usize, usize, BondOrder)> = Vec::new();
    let mut edge_set: HashSet<(usize, usize)> = HashSet::new();

    let mut prev: Option<usize> = None;
    let mut stack: Vec<usize> = Vec::new();
    let mut pending: Option<(BondOrder, usize)> = None;
    let mut rings: HashMap<u32, (usize, Option<BondOrder>, usize)> = HashMap::new();

    let push_edge = |a: usize,
                         b: usize,
                         order: BondOrder,
                         offset: usize,
                         edges: &mut Vec<(usize, usize, BondOrder)>,
                         edge_set: &mut HashSet<(usize, usize)>|
     -> Result<()> {
        if a == b {
            return Err(err(offset, "ring bond closes onto its own atom"));
        }
        let key = (a.min(b), a.max(b));
        if !edge_set.insert(key) {
            return Err(err(offset, "duplicate bond between the same atoms"));
        }
        edges.push((a, b, order));
        Ok(())
    };

    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            'A'..='Z' => {
                let two = smiles.get(i..i + 2).filter(|s| {
                    BARE_SYMBOLS.contains(s) && table.index_of(s).is_ok()
                });
                let (symbol, len) = match two {
                    Some(s) => (s, 2),
                    None => (&smiles[i..i + 1], 1),
                };
                if !BARE_SYMBOLS.contains(&symbol) {
                    return Err(err(i, format!("symbol `{symbol}` must be bracketed")));
                }
                let ty = table
                    .index_of(symbol)
                    .map_err(|_| err(i, format!("unknown atom symbol `{symbol}`")))?;
                let node = types.len();
                types.push(ty);
                offsets.push(i);
                if let Some(p) = prev {
                    let order = pending.take().map(|(o, _)| o).unwrap_or(BondOrder::Single);
                    push_edge(p, node, order, i, &mut edges, &mut edge_set)?;
                } else if let Some((_, bofs)) = pending.take() {
                    return Err(err(bofs, "bond with no preceding atom"));
                }
                prev = Some(node);
                i += len;
            }
            'a'..='z' => {
                return Err(err(
                    i,
                    "aromatic (lowercase) atoms are not supported; input must be kekulized",
                ));
            }
            '[' => {
                let close = smiles[i..]
                    .find(']')
                    .map(|k| i + k)
                    .ok_or_else(|| err(i, "unclosed bracket atom"))?;
                let inner = &smiles[i + 1..close];
                let symbol = parse_bracket(inner, i + 1)?;
                let ty = table
                    .index_of(&symbol)
                    .map_err(|_| err(i, format!("unknown atom symbol `{symbol}`")))?;
                let node = types.len();
                types.push(ty);
                offsets.push(i);
                if let Some(p) = prev {
                    let order = pending.take().map(|(o, _)| o).unwrap_or(BondOrder::Single);
                    push_edge(p, node, order, i, &mut edges, &mut edge_set)?;
                } else if let Some((_, bofs)) = pending.take() {
                    return Err(err(bofs, "bond with no preceding atom"));
                }
                prev = Some(node);
                i = close + 1;
            }
            '-' | '=' | '#' => {
                if pending.is_some() {
                    return Err(err(i, "two bond symbols in a row"));
                }
                let order = match c {
                    '-' => BondOrder::Single,
                    '=' => BondOrder::Double,
                    _ => BondOrder::Triple,
                };
                pending = Some((order, i));
                i += 1;
            }
            '(' => {
                let p = prev.ok_or_else(|| err(i, "branch with no preceding atom"))?;
                if pending.is_some() {
                    return Err(err(i, "bond symbol before a branch"));
                }
                stack.push(p);
                i += 1;
            }
            ')' => {
                if pending.is_some() {
                    return Err(err(i, "dangling bond before `)`"));
                }
                prev = Some(stack.pop().ok_or_else(|| err(i, "unmatched `)`"))?);
                i += 1;
            }
            '1'..='9' | '%' => {
                let (digit, len) = if c == '%' {
                    let s = smiles
                        .get(i + 1..i + 3)
                        .ok_or_else(|| err(i, "`%` needs two digits"))?;
                    let d: u32 = s
                        .parse()
                        .map_err(|_| err(i, "`%` needs two digits"))?;
                    (d, 3)
                } else {
                    (c as u32 - '0' as u32, 1)
                };
                let here = prev.ok_or_else(|| err(i, "ring digit with no preceding atom"))?;
                let taken = pending.take().map(|(o, _)| o);
                match rings.remove(&digit) {
                    Some((other, obond, oofs)) => {
                        let order = match (obond, taken) {
                            (None, None) => BondOrder::Single,
                            (Some(o), None) | (None, Some(o)) => o,
                            (Some(a), Some(b)) if a == b => a,
                            _ => {
                                return Err(err(
                                    i,
                                    format!(
                                        "ring bond {digit} has conflicting orders (opened at byte {oofs})"
                                    ),
                                ))
                            }
                        };
                        push_edge(other, here, order, i, &mut edges, &mut edge_set)?;
                    }
                    None => {
                        rings.insert(digit, (here, taken, i));
                    }
                }
                i += len;
            }
            _ => {
                return Err(err(i, format!("unexpected character `{c}`")));
            }
        }
    }

    if let Some((_, bofs)) = pending {
        return Err(err(bofs, "dangling bond at end of input"));
    }
    if !stack.is_empty() {
        return Err(err(bytes.len(), "unclosed branch"));
    }
    if let Some((&digit, &(_, _, ofs))) = rings.iter().next() {
        return Err(err(ofs, format!("unclosed ring bond {digit}")));
    }
    if types.is_empty() {
        return Err(err(0, "empty SMILES"));
    }

    let mut g = MolecularGraph::new(types);
    for (u, v, order) in edges {
        g.add_edge(u, v, order)
            .map_err(|e| err(offsets[u.max(v)], e.to_string()))?;
    }
    g.complete_hydrogens(table).map_err(|e| match e {
        ChemError::ValenceExceeded { node, used, max } => err(
            offsets[node],
            format!("valence violation: atom uses {used} bond units but allows {max}"),
        ),
        other => other,
    })
}

/// Bracket content: an element symbol plus an optional charge (`+`, `-`,
/// `+2`, `--`, ...). Returns the table symbol, e.g. "O-".
fn parse_bracket(inner: &str, offset: usize) -> Result<String> {
    let bytes = inner.as_bytes();
    if bytes.is_empty() {
        return Err(err(offset, "empty bracket atom"));
    }
    let mut i = 0;
    if !(bytes[0] as char).is_ascii_uppercase() {
        return Err(err(
            offset,
            "bracket atom must start with an uppercase element symbol",
        ));
    }
    i += 1;
    if i < bytes.len() && (bytes[i] as char).is_ascii_lowercase() {
        i += 1;
    }
    let base = &inner[..i];
    let mut plus = 0i32;
    let mut minus = 0i32;
    while i < bytes.len() {
        match bytes[i] as char {
            '+' => {
                plus += 1;
                i += 1;
            }
            '-' => {
                minus += 1;
                i += 1;
            }
            d @ '1'..='9' => {
                let n = d as i32 - '0' as i32;
                if plus == 1 && minus == 0 {
                    plus = n;
                } else if minus == 1 && plus == 0 {
                    minus = n;
                } else {
                    return Err(err(offset + i, "charge digit without a sign"));
                }
                i += 1;
            }
            'H' => {
                return Err(err(
                    offset + i,
                    "explicit hydrogen counts in brackets are not supported",
                ));
            }
            c => {
                return Err(err(offset + i, format!("unsupported bracket content `{c}`")));
            }
        }
    }
    if plus > 0 && minus > 0 {
        return Err(err(offset, "conflicting charge signs"));
    }
    let mut symbol = base.to_string();
    for _ in 0..plus {
        symbol.push('+');
    }
    for _ in 0..minus {
        symbol.push('-');
    }
    Ok(symbol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> AtomTypeTable {
        AtomTypeTable::qm9()
    }

    #[test]
    fn single_atom() {
        let t = table();
        let g = parse("C", &t).unwrap();
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.hydrogen_count(0), 4);
    }

    #[test]
    fn double_bond() {
        let t = table();
        let g = parse("C=O", &t).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_order(0, 1), Some(BondOrder::Double));
    }

    #[test]
    fn ring_closure_forms_a_triangle() {
        let t = table();
        let g = parse("C1CC1", &t).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 3);
        for (u, v) in [(0, 1), (1, 2), (0, 2)] {
            assert_eq!(g.edge_order(u, v), Some(BondOrder::Single));
        }
    }

    #[test]
    fn branches() {
        let t = table();
        let g = parse("CC(=O)N", &t).unwrap();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.edge_order(1, 2), Some(BondOrder::Double));
        assert_eq!(g.edge_order(1, 3), Some(BondOrder::Single));
    }

    #[test]
    fn bracket_charges() {
        let t = table();
        let g = parse("[O-]", &t).unwrap();
        assert_eq!(t.symbol(g.node_type(0)).unwrap(), "O-");
        assert_eq!(g.hydrogen_count(0), 1);
        let g = parse("C[N+](C)(C)C", &t).unwrap();
        assert_eq!(g.node_count(), 5);
        assert_eq!(g.hydrogen_count(1), 0);
    }

    #[test]
    fn aromatic_rejected_with_offset() {
        let t = table();
        let e = parse("c1ccccc1", &t).unwrap_err();
        match e {
            ChemError::Smiles { offset, message } => {
                assert_eq!(offset, 0);
                assert!(message.contains("kekulized"));
            }
            other => panic!("wrong error {other}"),
        }
    }

    #[test]
    fn structural_errors() {
        let t = table();
        assert!(parse("C1CC", &t).is_err(), "unclosed ring");
        assert!(parse("C(C", &t).is_err(), "unclosed branch");
        assert!(parse("C)", &t).is_err(), "unmatched close");
        assert!(parse("=C", &t).is_err(), "leading bond");
        assert!(parse("C=", &t).is_err(), "dangling bond");
        assert!(parse("C==O", &t).is_err(), "double bond symbol");
        assert!(parse("", &t).is_err(), "empty");
        assert!(parse("C.C", &t).is_err(), "dot disconnect unsupported");
        assert!(parse("C11", &t).is_err(), "self ring");
    }

    #[test]
    fn valence_violation_rejected() {
        let t = table();
        // O with two double bonds
        let e = parse("C=O=C", &t).unwrap_err();
        assert!(matches!(e, ChemError::Smiles { .. }), "{e}");
        assert!(e.to_string().contains("valence"));
        // F with two neighbours
        assert!(parse("FC(F)(F)F", &t).is_ok());
        assert!(parse("C#N", &t).is_ok());
        assert!(parse("C#O", &t).is_err());
    }

    #[test]
    fn percent_ring_digits() {
        let t = table();
        let g = parse("C%12CC%12", &t).unwrap();
        assert_eq!(g.edge_count(), 3);
    }
}
