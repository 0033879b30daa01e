use chem::{BondLedger, BondOrder, MolecularGraph};

/// Everything needed to decide which edges and labels are legal from the
/// current focus node.
#[derive(Debug)]
pub struct MaskContext<'a> {
    pub ledger: &'a BondLedger,
    pub graph: &'a MolecularGraph,
    pub focus: usize,
}

/// Whether an edge from the focus to working node `u` is allowed: both
/// endpoints must have spare valence, the edge must not already exist, no
/// self loops, and `u` must not be closed. The stop node bypasses this and
/// is always available.
pub fn edge_mask(ctx: &MaskContext<'_>, u: usize) -> bool {
    ctx.ledger.remaining(ctx.focus) > 0
        && ctx.ledger.remaining(u) > 0
        && !ctx.graph.has_edge(ctx.focus, u)
        && u != ctx.focus
        && !ctx.ledger.is_closed(u)
}

/// Whether label `order` is allowed on an edge the mask already admits:
/// both endpoints must retain capacity for that many bond units.
pub fn label_mask(ctx: &MaskContext<'_>, u: usize, order: BondOrder) -> bool {
    let units = order.bonds();
    units <= ctx.ledger.remaining(u) && units <= ctx.ledger.remaining(ctx.focus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chem::AtomTypeTable;

    fn ctx_fixture() -> (AtomTypeTable, MolecularGraph, BondLedger) {
        let t = AtomTypeTable::qm9();
        let c = t.index_of("C").unwrap();
        let n = t.index_of("N").unwrap();
        let o = t.index_of("O").unwrap();
        let g = MolecularGraph::new(vec![c, c, n, o]);
        let ledger = BondLedger::from_graph(&g, &t).unwrap();
        (t, g, ledger)
    }

    #[test]
    fn self_loop_masked() {
        let (_, g, ledger) = ctx_fixture();
        let ctx = MaskContext {
            ledger: &ledger,
            graph: &g,
            focus: 0,
        };
        assert!(!edge_mask(&ctx, 0));
        assert!(edge_mask(&ctx, 1), "fresh C to fresh C is legal");
    }

    #[test]
    fn closed_node_masked() {
        let (_, g, mut ledger) = ctx_fixture();
        ledger.close(1);
        let ctx = MaskContext {
            ledger: &ledger,
            graph: &g,
            focus: 0,
        };
        assert!(!edge_mask(&ctx, 1));
    }

    #[test]
    fn existing_edge_masked() {
        let (t, mut g, _) = ctx_fixture();
        g.add_edge(0, 1, BondOrder::Single).unwrap();
        let ledger = BondLedger::from_graph(&g, &t).unwrap();
        let ctx = MaskContext {
            ledger: &ledger,
            graph: &g,
            focus: 0,
        };
        assert!(!edge_mask(&ctx, 1));
        assert!(edge_mask(&ctx, 2));
    }

    #[test]
    fn saturated_focus_masks_everything() {
        let (t, mut g, _) = ctx_fixture();
        // saturate the O (valence 2) with a double bond
        g.add_edge(3, 0, BondOrder::Double).unwrap();
        let ledger = BondLedger::from_graph(&g, &t).unwrap();
        let ctx = MaskContext {
            ledger: &ledger,
            graph: &g,
            focus: 3,
        };
        for u in 0..4 {
            assert!(!edge_mask(&ctx, u));
        }
    }

    #[test]
    fn label_capacity_is_symmetric() {
        let (t, mut g, _) = ctx_fixture();
        // N with one existing bond: single/double allowed, triple masked
        g.add_edge(2, 1, BondOrder::Single).unwrap();
        let ledger = BondLedger::from_graph(&g, &t).unwrap();
        let ctx = MaskContext {
            ledger: &ledger,
            graph: &g,
            focus: 0,
        };
        assert!(label_mask(&ctx, 2, BondOrder::Single));
        assert!(label_mask(&ctx, 2, BondOrder::Double));
        assert!(!label_mask(&ctx, 2, BondOrder::Triple));

        // O with one bond: only single left
        let mut g2 = g.clone();
        g2.add_edge(3, 1, BondOrder::Single).unwrap();
        let ledger2 = BondLedger::from_graph(&g2, &t).unwrap();
        let ctx2 = MaskContext {
            ledger: &ledger2,
            graph: &g2,
            focus: 0,
        };
        assert!(label_mask(&ctx2, 3, BondOrder::Single));
        assert!(!label_mask(&ctx2, 3, BondOrder::Double));

        // focus O with one bond, target fresh C: double masked by the
        // focus side even though the target could take it
        let ctx3 = MaskContext {
            ledger: &ledger2,
            graph: &g2,
            focus: 3,
        };
        assert!(label_mask(&ctx3, 0, BondOrder::Single));
        assert!(!label_mask(&ctx3, 0, BondOrder::Double));
    }
}
