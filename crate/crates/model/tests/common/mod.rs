//! Shared fixtures and oracle helpers for the integration suites.
#![allow(dead_code)]

use std::collections::HashMap;

use autodiff::{NodeId, ParamBindings, ParamStore, Tape, Tensor};
use chem::{AtomTypeTable, Edge, MolecularGraph};
use model::config::ModelConfig;
use model::decoder::{
    apply_decision, bind_decoder, build_state_at, init_nodes, score_candidates, TypeAssignment,
};
use model::trace::{Decision, TraceSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn qm9_table() -> AtomTypeTable {
    AtomTypeTable::qm9()
}

/// The uncharged C/N/O/F core of the QM9 table.
pub fn qm9_core_table() -> AtomTypeTable {
    let full = AtomTypeTable::qm9();
    AtomTypeTable::new(full.iter().take(4).cloned().collect()).unwrap()
}

pub fn fixed_latents(n: usize, d: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Tensor::vector((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect()
}

/// Sum of log-probabilities of the chosen steps along one trace, scored by
/// sequential teacher-forced replay.
pub fn trace_log_prob(
    store: &ParamStore,
    cfg: &ModelConfig,
    table: &AtomTypeTable,
    graph: &MolecularGraph,
    z: &[Tensor],
    trace: &TraceSample,
) -> f64 {
    let mut tape = Tape::new();
    let mut bindings = ParamBindings::new();
    let weights = bind_decoder(&mut tape, &mut bindings, store).unwrap();
    let z_ids: Vec<NodeId> = z.iter().map(|t| tape.leaf(t.clone())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut state, _) = init_nodes(
        &mut tape,
        &weights,
        cfg,
        table,
        &z_ids,
        TypeAssignment::Teacher(graph.types()),
        Some(trace.start),
        &mut rng,
    )
    .unwrap();
    let mut total = 0.0;
    for tr in &trace.transitions {
        assert_eq!(state.focus, Some(tr.focus), "replay follows the trace");
        let mut scores = score_candidates(&mut tape, &weights, cfg, &state).unwrap();
        let lp = scores
            .decision_log_prob(&mut tape, &weights, tr.chosen)
            .unwrap();
        total += tape.value(lp).item().unwrap();
        apply_decision(&mut tape, &weights, cfg, &mut state, tr.chosen).unwrap();
    }
    total
}

pub type StateKey = (Vec<Edge>, Vec<usize>, usize);

/// The state-based form of the reconstruction objective: group identical
/// states (partial graph, closed set, focus) across all traces, weight each
/// by its visit probability, and credit the mean log-probability of every
/// valid expansion. Each state is rebuilt from scratch, independent of any
/// replay.
pub fn state_based_expectation(
    store: &ParamStore,
    cfg: &ModelConfig,
    table: &AtomTypeTable,
    graph: &MolecularGraph,
    z: &[Tensor],
    traces: &[(TraceSample, f64)],
) -> f64 {
    let mut groups: HashMap<StateKey, (f64, Vec<Decision>)> = HashMap::new();
    for (trace, w) in traces {
        for tr in &trace.transitions {
            let mut edges = tr.edges_before.clone();
            edges.sort_unstable();
            let mut closed = tr.closed_before.clone();
            closed.sort_unstable();
            let entry = groups
                .entry((edges, closed, tr.focus))
                .or_insert_with(|| (0.0, tr.candidates.clone()));
            entry.0 += w;
            assert_eq!(entry.1, tr.candidates, "expansions are a state property");
        }
    }

    let mut total = 0.0;
    for ((edges, closed, focus), (weight, candidates)) in groups {
        let mut tape = Tape::new();
        let mut bindings = ParamBindings::new();
        let weights = bind_decoder(&mut tape, &mut bindings, store).unwrap();
        let z_ids: Vec<NodeId> = z.iter().map(|t| tape.leaf(t.clone())).collect();
        let state = build_state_at(
            &mut tape,
            &weights,
            cfg,
            table,
            &z_ids,
            graph.types(),
            &edges,
            &closed,
            focus,
        )
        .unwrap();
        let mut scores = score_candidates(&mut tape, &weights, cfg, &state).unwrap();
        let mut mean = 0.0;
        for &d in &candidates {
            let lp = scores.decision_log_prob(&mut tape, &weights, d).unwrap();
            mean += tape.value(lp).item().unwrap();
        }
        mean /= candidates.len() as f64;
        total += weight * mean;
    }
    total
}
