use std::collections::{HashMap, VecDeque};

use autodiff::{NodeId, ParamBindings, ParamStore, Tape, Tensor};
use chem::{AtomTypeTable, BondLedger, BondOrder, Distance, MolecularGraph};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::ModelConfig;
use crate::ggnn::propagate;
use crate::masking::{edge_mask, label_mask, MaskContext};
use crate::params::{
    bind_ggnn, bind_linear, bind_mlp, linear_apply, mlp_apply, GgnnWeights, LinearWeights,
    MlpWeights,
};
use crate::trace::Decision;
use crate::{ModelError, Result};

/// All decoder weights bound onto one tape.
#[derive(Debug, Clone, Copy)]
pub struct DecoderWeights {
    pub gnn: GgnnWeights,
    pub stop_state: NodeId,
    pub node_type: LinearWeights,
    pub target: MlpWeights,
    pub label: [MlpWeights; 3],
}

pub fn bind_decoder(
    tape: &mut Tape,
    bindings: &mut ParamBindings,
    store: &ParamStore,
) -> Result<DecoderWeights> {
    Ok(DecoderWeights {
        gnn: bind_ggnn(tape, bindings, store, "dec.gnn")?,
        stop_state: bindings.bind(tape, store, "dec.stop_state")?,
        node_type: bind_linear(tape, bindings, store, "dec.node_type")?,
        target: bind_mlp(tape, bindings, store, "dec.target")?,
        label: [
            bind_mlp(tape, bindings, store, "dec.label1")?,
            bind_mlp(tape, bindings, store, "dec.label2")?,
            bind_mlp(tape, bindings, store, "dec.label3")?,
        ],
    })
}

/// How node types are assigned at initialization.
pub enum TypeAssignment<'a> {
    /// Force the dataset types (training / reconstruction).
    Teacher(&'a [usize]),
    /// Draw from the type classifier's softmax.
    Sample,
    /// Deterministic argmax of the classifier.
    Argmax,
}

/// The evolving state of one generation episode.
pub struct GenerationState {
    pub types: Vec<usize>,
    pub graph: MolecularGraph,
    pub ledger: BondLedger,
    pub queue: VecDeque<usize>,
    pub focus: Option<usize>,
    /// Nodes reached by the growing connected component.
    pub connected: Vec<bool>,
    /// Current node states h^(t); equals `initial_states` until an edge lands.
    pub node_states: Vec<NodeId>,
    pub initial_states: Vec<NodeId>,
    /// Mean initial state over all nodes.
    pub global_init: NodeId,
    /// Mean current state over the connected component.
    pub global_now: NodeId,
    pub stop_state: NodeId,
    pub step: usize,
}

fn one_hot(width: usize, index: usize) -> Tensor {
    let mut data = vec![0.0; width];
    data[index] = 1.0;
    Tensor::vector(data)
}

fn categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn mean_of(tape: &mut Tape, ids: &[NodeId]) -> Result<NodeId> {
    let total = tape.add_n(ids)?;
    Ok(tape.scale(total, 1.0 / ids.len() as f64))
}

fn recompute_global_now(tape: &mut Tape, state: &mut GenerationState) -> Result<()> {
    let members: Vec<NodeId> = (0..state.types.len())
        .filter(|&v| state.connected[v])
        .map(|v| state.node_states[v])
        .collect();
    state.global_now = mean_of(tape, &members)?;
    Ok(())
}

/// Assign node types from the latents, build initial states [z, one-hot],
/// seed the focus queue, and return the per-node type log-probabilities.
#[allow(clippy::too_many_arguments)]
pub fn init_nodes<R: Rng>(
    tape: &mut Tape,
    weights: &DecoderWeights,
    cfg: &ModelConfig,
    table: &AtomTypeTable,
    z: &[NodeId],
    assignment: TypeAssignment<'_>,
    start: Option<usize>,
    rng: &mut R,
) -> Result<(GenerationState, Vec<NodeId>)> {
    let n = z.len();
    if n == 0 {
        return Err(ModelError::EmptyGraph);
    }
    if table.len() != cfg.num_types {
        return Err(ModelError::TableMismatch {
            table: table.len(),
            config: cfg.num_types,
        });
    }

    let mut types = Vec::with_capacity(n);
    let mut type_log_probs = Vec::with_capacity(n);
    let mut initial_states = Vec::with_capacity(n);
    for (v, &zv) in z.iter().enumerate() {
        let logits = linear_apply(tape, &weights.node_type, zv)?;
        let probs = tape.softmax(logits)?;
        let ty = match &assignment {
            TypeAssignment::Teacher(forced) => forced[v],
            TypeAssignment::Sample => categorical(tape.value(probs).data(), rng),
            TypeAssignment::Argmax => argmax(tape.value(probs).data()),
        };
        if ty >= cfg.num_types {
            return Err(ModelError::TypeOutOfRange {
                type_index: ty,
                num_types: cfg.num_types,
            });
        }
        let picked = tape.pick(probs, ty)?;
        type_log_probs.push(tape.ln(picked));
        let tau = tape.leaf(one_hot(cfg.num_types, ty));
        initial_states.push(tape.concat(&[zv, tau])?);
        types.push(ty);
    }

    let global_init = mean_of(tape, &initial_states)?;
    let start = match start {
        Some(s) => s,
        None => rng.gen_range(0..n),
    };
    let mut connected = vec![false; n];
    connected[start] = true;

    let ledger = BondLedger::for_types(&types, table)?;
    let mut state = GenerationState {
        graph: MolecularGraph::new(types.clone()),
        types,
        ledger,
        queue: VecDeque::new(),
        focus: Some(start),
        connected,
        node_states: initial_states.clone(),
        initial_states,
        global_init,
        global_now: global_init, // replaced below
        stop_state: weights.stop_state,
        step: 0,
    };
    recompute_global_now(tape, &mut state)?;
    Ok((state, type_log_probs))
}

/// Recompute every node state from the initial states over the current
/// partial graph. Starting from h^(0) each time makes the result a function
/// of the edge set alone, not of the order it was built in.
pub fn node_update(
    tape: &mut Tape,
    weights: &DecoderWeights,
    cfg: &ModelConfig,
    state: &mut GenerationState,
) -> Result<()> {
    if cfg.frozen_decoder_states {
        state.node_states = state.initial_states.clone();
    } else {
        state.node_states = propagate(
            tape,
            &weights.gnn,
            cfg.rounds,
            &state.initial_states,
            &state.graph.adjacency(),
        )?;
    }
    recompute_global_now(tape, state)
}

fn distance_one_hot(cfg: &ModelConfig, d: Distance) -> Tensor {
    let buckets = cfg.dist_buckets();
    let idx = match d {
        Distance::Hops(h) => (h as usize).clamp(1, cfg.max_dist + 1) - 1,
        Distance::Disconnected => buckets - 1,
    };
    one_hot(buckets, idx)
}

/// Edge-candidate scores at the current state: the masked target
/// distribution over legal working nodes plus the stop node, with edge
/// features cached for label scoring.
pub struct CandidateScores {
    pub focus: usize,
    /// Working-node candidates that pass the edge mask, ascending.
    pub candidates: Vec<usize>,
    /// Index of the stop pseudo-candidate (== candidates.len()).
    pub stop_index: usize,
    /// Masked-normalized probabilities over candidates then stop.
    pub target_probs: NodeId,
    phi: Vec<NodeId>,
    label_allowed: Vec<[bool; 3]>,
    label_probs: HashMap<usize, NodeId>,
}

impl CandidateScores {
    /// Position of a decision in the target distribution; errors if the
    /// teacher decision is masked out.
    pub fn index_of(&self, decision: Decision) -> Result<usize> {
        match decision {
            Decision::Stop => Ok(self.stop_index),
            Decision::Edge { target, .. } => self
                .candidates
                .binary_search(&target)
                .map_err(|_| ModelError::TeacherEdgeMasked {
                    focus: self.focus,
                    target,
                }),
        }
    }

    pub fn target_log_prob(&self, tape: &mut Tape, index: usize) -> Result<NodeId> {
        let p = tape.pick(self.target_probs, index)?;
        Ok(tape.ln(p))
    }

    /// Masked label distribution for candidate `index`, built on first use.
    pub fn label_probs(
        &mut self,
        tape: &mut Tape,
        weights: &DecoderWeights,
        index: usize,
    ) -> Result<NodeId> {
        if let Some(&id) = self.label_probs.get(&index) {
            return Ok(id);
        }
        let phi = self.phi[index];
        let logits: Vec<NodeId> = weights
            .label
            .iter()
            .map(|w| mlp_apply(tape, w, phi))
            .collect::<Result<_>>()?;
        let stacked = tape.concat(&logits)?;
        let mask = self.label_allowed[index];
        let probs = tape.masked_softmax(stacked, &mask)?;
        self.label_probs.insert(index, probs);
        Ok(probs)
    }

    pub fn label_log_prob(
        &mut self,
        tape: &mut Tape,
        weights: &DecoderWeights,
        index: usize,
        order: BondOrder,
    ) -> Result<NodeId> {
        let probs = self.label_probs(tape, weights, index)?;
        let p = tape.pick(probs, order.bonds() as usize - 1)?;
        Ok(tape.ln(p))
    }

    /// Log-probability of a full decision: target choice, plus label choice
    /// for real edges.
    pub fn decision_log_prob(
        &mut self,
        tape: &mut Tape,
        weights: &DecoderWeights,
        decision: Decision,
    ) -> Result<NodeId> {
        let idx = self.index_of(decision)?;
        let target_lp = self.target_log_prob(tape, idx)?;
        match decision {
            Decision::Stop => Ok(target_lp),
            Decision::Edge { order, .. } => {
                let label_lp = self.label_log_prob(tape, weights, idx, order)?;
                Ok(tape.add(target_lp, label_lp)?)
            }
        }
    }
}

/// Build the edge feature vector phi for one candidate state pair.
fn edge_features(
    tape: &mut Tape,
    cfg: &ModelConfig,
    state: &GenerationState,
    focus_state: NodeId,
    candidate_state: NodeId,
    dist: Distance,
) -> Result<NodeId> {
    let mut parts = vec![focus_state, candidate_state];
    if cfg.use_distance {
        parts.push(tape.leaf(distance_one_hot(cfg, dist)));
    }
    parts.push(state.global_init);
    parts.push(state.global_now);
    Ok(tape.concat(&parts)?)
}

/// Score every legal candidate (and stop) from the current focus.
pub fn score_candidates(
    tape: &mut Tape,
    weights: &DecoderWeights,
    cfg: &ModelConfig,
    state: &GenerationState,
) -> Result<CandidateScores> {
    let focus = state.focus.ok_or(ModelError::NoFocus)?;
    let ctx = MaskContext {
        ledger: &state.ledger,
        graph: &state.graph,
        focus,
    };
    let candidates: Vec<usize> = (0..state.types.len())
        .filter(|&u| edge_mask(&ctx, u))
        .collect();
    let dists = state.graph.distances_from(focus);
    let focus_state = state.node_states[focus];

    let mut phi = Vec::with_capacity(candidates.len() + 1);
    let mut label_allowed = Vec::with_capacity(candidates.len() + 1);
    let mut logits = Vec::with_capacity(candidates.len() + 1);
    for &u in &candidates {
        let f = edge_features(tape, cfg, state, focus_state, state.node_states[u], dists[u])?;
        logits.push(mlp_apply(tape, &weights.target, f)?);
        phi.push(f);
        label_allowed.push([
            label_mask(&ctx, u, BondOrder::Single),
            label_mask(&ctx, u, BondOrder::Double),
            label_mask(&ctx, u, BondOrder::Triple),
        ]);
    }
    // the stop node: its learned state stands in for the candidate, and its
    // distance bucket is the disconnected one
    let f = edge_features(
        tape,
        cfg,
        state,
        focus_state,
        state.stop_state,
        Distance::Disconnected,
    )?;
    logits.push(mlp_apply(tape, &weights.target, f)?);
    phi.push(f);
    label_allowed.push([false; 3]);

    let stacked = tape.concat(&logits)?;
    let target_probs = tape.softmax(stacked)?;
    Ok(CandidateScores {
        focus,
        stop_index: candidates.len(),
        candidates,
        target_probs,
        phi,
        label_allowed,
        label_probs: HashMap::new(),
    })
}

/// Commit a decision: either close the focus and move to the next queued
/// node, or add the edge, enqueue a newly connected node, and refresh all
/// node states.
pub fn apply_decision(
    tape: &mut Tape,
    weights: &DecoderWeights,
    cfg: &ModelConfig,
    state: &mut GenerationState,
    decision: Decision,
) -> Result<()> {
    let focus = state.focus.ok_or(ModelError::NoFocus)?;
    match decision {
        Decision::Stop => {
            state.ledger.close(focus);
            state.focus = state.queue.pop_front();
        }
        Decision::Edge { target, order } => {
            state.graph.add_edge(focus, target, order)?;
            state.ledger.add_bond(focus, target, order)?;
            if !state.connected[target] {
                state.connected[target] = true;
                state.queue.push_back(target);
            }
            state.step += 1;
            node_update(tape, weights, cfg, state)?;
        }
    }
    Ok(())
}

/// How `edge_step` picks among the scored candidates.
pub enum StepMode {
    Sample,
    Greedy,
    Teacher(Decision),
}

pub struct StepOutcome {
    pub decision: Decision,
    pub target_log_prob: NodeId,
    pub label_log_prob: Option<NodeId>,
}

/// One decoder step: score candidates, pick a target (and label for real
/// edges), and advance the state.
pub fn edge_step<R: Rng>(
    tape: &mut Tape,
    weights: &DecoderWeights,
    cfg: &ModelConfig,
    state: &mut GenerationState,
    mode: StepMode,
    rng: &mut R,
) -> Result<StepOutcome> {
    let mut scores = score_candidates(tape, weights, cfg, state)?;
    let index = match &mode {
        StepMode::Sample => categorical(tape.value(scores.target_probs).data(), rng),
        StepMode::Greedy => argmax(tape.value(scores.target_probs).data()),
        StepMode::Teacher(decision) => scores.index_of(*decision)?,
    };
    let target_log_prob = scores.target_log_prob(tape, index)?;

    let decision = if index == scores.stop_index {
        Decision::Stop
    } else {
        let target = scores.candidates[index];
        let order = match &mode {
            StepMode::Teacher(Decision::Edge { order, .. }) => {
                if !scores.label_allowed[index][order.bonds() as usize - 1] {
                    return Err(ModelError::TeacherEdgeMasked {
                        focus: scores.focus,
                        target,
                    });
                }
                *order
            }
            StepMode::Teacher(Decision::Stop) => unreachable!("stop resolves to stop_index"),
            StepMode::Sample => {
                let probs = scores.label_probs(tape, weights, index)?;
                let l = categorical(tape.value(probs).data(), rng);
                BondOrder::from_bonds(l as u8 + 1)?
            }
            StepMode::Greedy => {
                let probs = scores.label_probs(tape, weights, index)?;
                BondOrder::from_bonds(argmax(tape.value(probs).data()) as u8 + 1)?
            }
        };
        Decision::Edge { target, order }
    };

    let label_log_prob = match decision {
        Decision::Stop => None,
        Decision::Edge { order, .. } => {
            Some(scores.label_log_prob(tape, weights, index, order)?)
        }
    };
    apply_decision(tape, weights, cfg, state, decision)?;
    Ok(StepOutcome {
        decision,
        target_log_prob,
        label_log_prob,
    })
}

/// Rebuild a mid-generation state from its parts (latents, forced types, a
/// partial edge set, the closed set and a focus). Used to score stored
/// transitions without replaying their whole trace.
#[allow(clippy::too_many_arguments)]
pub fn build_state_at(
    tape: &mut Tape,
    weights: &DecoderWeights,
    cfg: &ModelConfig,
    table: &AtomTypeTable,
    z: &[NodeId],
    types: &[usize],
    edges: &[chem::Edge],
    closed: &[usize],
    focus: usize,
) -> Result<GenerationState> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    use rand::SeedableRng;
    let (mut state, _) = init_nodes(
        tape,
        weights,
        cfg,
        table,
        z,
        TypeAssignment::Teacher(types),
        Some(focus),
        &mut rng,
    )?;
    for e in edges {
        state.graph.add_edge(e.u, e.v, e.order)?;
        state.ledger.add_bond(e.u, e.v, e.order)?;
    }
    for &c in closed {
        state.ledger.close(c);
    }
    // connected component of the focus
    let dists = state.graph.distances_from(focus);
    for v in 0..types.len() {
        state.connected[v] = dists[v] != Distance::Disconnected;
    }
    if !edges.is_empty() {
        node_update(tape, weights, cfg, &mut state)?;
    } else {
        recompute_global_now(tape, &mut state)?;
    }
    Ok(state)
}

/// Decode one molecule from given latents: assign types, grow edges until
/// the focus queue empties, drop nodes that never connected, and complete
/// hydrogens. The masks make the result valid for any parameters.
#[allow(clippy::too_many_arguments)]
pub fn decode_from_z<R: Rng>(
    tape: &mut Tape,
    weights: &DecoderWeights,
    cfg: &ModelConfig,
    table: &AtomTypeTable,
    z: &[NodeId],
    rng: &mut R,
    greedy: bool,
) -> Result<MolecularGraph> {
    let assignment = if greedy {
        TypeAssignment::Argmax
    } else {
        TypeAssignment::Sample
    };
    let (mut state, _) = init_nodes(tape, weights, cfg, table, z, assignment, None, rng)?;
    while state.focus.is_some() {
        let mode = if greedy {
            StepMode::Greedy
        } else {
            StepMode::Sample
        };
        edge_step(tape, weights, cfg, &mut state, mode, rng)?;
    }
    let (kept, _) = state.graph.keep_nodes(&state.connected);
    Ok(kept.complete_hydrogens(table)?)
}

/// Feature vector for an unordered node pair at the initial state, used by
/// the one-shot independent-edge mode (both global slots are the initial
/// mean and the distance bucket is "disconnected").
pub fn independent_pair_features(
    tape: &mut Tape,
    cfg: &ModelConfig,
    state: &GenerationState,
    u: usize,
    v: usize,
) -> Result<NodeId> {
    edge_features(
        tape,
        cfg,
        state,
        state.initial_states[u],
        state.initial_states[v],
        Distance::Disconnected,
    )
}

/// Score all possible edges once from the initial states and sample them
/// independently (one-shot generation). Valence can overflow, so hydrogen
/// completion clamps and the result may be invalid; the largest connected
/// component is kept.
pub fn decode_independent<R: Rng>(
    tape: &mut Tape,
    weights: &DecoderWeights,
    cfg: &ModelConfig,
    table: &AtomTypeTable,
    z: &[NodeId],
    rng: &mut R,
) -> Result<MolecularGraph> {
    let (mut state, _) = init_nodes(
        tape,
        weights,
        cfg,
        table,
        z,
        TypeAssignment::Sample,
        None,
        rng,
    )?;
    state.global_now = state.global_init;
    let n = state.types.len();
    let fresh = BondLedger::for_types(&state.types, table)?;
    let mut graph = MolecularGraph::new(state.types.clone());
    for u in 0..n {
        for v in u + 1..n {
            let f = independent_pair_features(tape, cfg, &state, u, v)?;
            let logit = mlp_apply(tape, &weights.target, f)?;
            let p = tape.sigmoid(logit);
            if rng.gen::<f64>() >= tape.value(p).item()? {
                continue;
            }
            let allowed = [
                BondOrder::Single.bonds() <= fresh.remaining(u).min(fresh.remaining(v)),
                BondOrder::Double.bonds() <= fresh.remaining(u).min(fresh.remaining(v)),
                BondOrder::Triple.bonds() <= fresh.remaining(u).min(fresh.remaining(v)),
            ];
            let logits: Vec<NodeId> = weights
                .label
                .iter()
                .map(|w| mlp_apply(tape, w, f))
                .collect::<Result<_>>()?;
            let stacked = tape.concat(&logits)?;
            let probs = tape.masked_softmax(stacked, &allowed)?;
            let l = categorical(tape.value(probs).data(), rng);
            graph.add_edge(u, v, BondOrder::from_bonds(l as u8 + 1)?)?;
        }
    }
    // keep the largest component (lowest index on ties)
    let mut best: Option<Vec<bool>> = None;
    let mut seen = vec![false; n];
    for v in 0..n {
        if seen[v] {
            continue;
        }
        let dists = graph.distances_from(v);
        let members: Vec<bool> = dists.iter().map(|d| *d != Distance::Disconnected).collect();
        for (u, &m) in members.iter().enumerate() {
            if m {
                seen[u] = true;
            }
        }
        let size = members.iter().filter(|&&m| m).count();
        if best
            .as_ref()
            .map(|b| size > b.iter().filter(|&&m| m).count())
            .unwrap_or(true)
        {
            best = Some(members);
        }
    }
    let (kept, _) = graph.keep_nodes(&best.expect("at least one node"));
    Ok(kept.complete_hydrogens_clamped(table)?)
}

/// Sample one molecule from the prior: fresh standard-normal latents for
/// `n_nodes` slots, then the configured decoding procedure.
pub fn generate<R: Rng>(
    store: &ParamStore,
    cfg: &ModelConfig,
    table: &AtomTypeTable,
    n_nodes: usize,
    rng: &mut R,
) -> Result<MolecularGraph> {
    let mut tape = Tape::new();
    let mut bindings = ParamBindings::new();
    let weights = bind_decoder(&mut tape, &mut bindings, store)?;
    let z: Vec<NodeId> = (0..n_nodes)
        .map(|_| {
            let data: Vec<f64> = (0..cfg.latent_dim).map(|_| rng.sample(StandardNormal)).collect();
            tape.leaf(Tensor::vector(data))
        })
        .collect();
    if cfg.independent_edges {
        decode_independent(&mut tape, &weights, cfg, table, &z, rng)
    } else {
        decode_from_z(&mut tape, &weights, cfg, table, &z, rng, false)
    }
}

/// Draw `count` molecules in parallel, sizes from the empirical histogram.
/// Each molecule gets its own seed-derived stream, so results do not depend
/// on scheduling and are reproducible from (seed, index).
pub fn sample_molecules(
    store: &ParamStore,
    cfg: &ModelConfig,
    table: &AtomTypeTable,
    policy: &crate::dataset::SizePolicy,
    count: usize,
    seed: u64,
) -> Result<Vec<MolecularGraph>> {
    use rand::SeedableRng;
    use rayon::prelude::*;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng =
                rand_chacha::ChaCha8Rng::seed_from_u64(crate::derive_seed(seed, 10, i as u64));
            let n = policy.sample(&mut rng);
            generate(store, cfg, table, n, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::init_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (ModelConfig, ParamStore, AtomTypeTable) {
        let table = AtomTypeTable::qm9();
        let cfg = ModelConfig::new(6, table.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = init_params(&cfg, &mut rng);
        (cfg, store, table)
    }

    fn fresh_z(tape: &mut Tape, cfg: &ModelConfig, n: usize, rng: &mut ChaCha8Rng) -> Vec<NodeId> {
        (0..n)
            .map(|_| {
                let data: Vec<f64> =
                    (0..cfg.latent_dim).map(|_| rng.sample(StandardNormal)).collect();
                tape.leaf(Tensor::vector(data))
            })
            .collect()
    }

    #[test]
    fn teacher_types_are_honored() {
        let (cfg, store, table) = setup(0);
        let mut tape = Tape::new();
        let mut bindings = ParamBindings::new();
        let weights = bind_decoder(&mut tape, &mut bindings, &store).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = fresh_z(&mut tape, &cfg, 3, &mut rng);
        let forced = vec![2, 0, 1];
        let (state, lps) = init_nodes(
            &mut tape,
            &weights,
            &cfg,
            &table,
            &z,
            TypeAssignment::Teacher(&forced),
            Some(0),
            &mut rng,
        )
        .unwrap();
        assert_eq!(state.types, forced);
        assert_eq!(lps.len(), 3);
        // log-probs are real probabilities
        for &lp in &lps {
            assert!(tape.value(lp).item().unwrap() <= 0.0);
        }
    }

    #[test]
    fn argmax_mode_picks_the_forced_class() {
        let (cfg, mut store, table) = setup(2);
        // bias the classifier hard toward class 3
        let b = store.get_mut("dec.node_type.b").unwrap();
        for (i, x) in b.data_mut().iter_mut().enumerate() {
            *x = if i == 3 { 50.0 } else { -50.0 };
        }
        let mut tape = Tape::new();
        let mut bindings = ParamBindings::new();
        let weights = bind_decoder(&mut tape, &mut bindings, &store).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = fresh_z(&mut tape, &cfg, 2, &mut rng);
        let (state, _) = init_nodes(
            &mut tape,
            &weights,
            &cfg,
            &table,
            &z,
            TypeAssignment::Argmax,
            Some(0),
            &mut rng,
        )
        .unwrap();
        assert_eq!(state.types, vec![3, 3]);
    }

    #[test]
    fn type_sampling_matches_softmax_frequencies() {
        let (cfg, store, table) = setup(4);
        let mut tape = Tape::new();
        let mut bindings = ParamBindings::new();
        let weights = bind_decoder(&mut tape, &mut bindings, &store).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = fresh_z(&mut tape, &cfg, 1, &mut rng);

        // exact probabilities via an independent softmax computation
        let w = store.get("dec.node_type.w").unwrap();
        let b = store.get("dec.node_type.b").unwrap();
        let zv = tape.value(z[0]).data().to_vec();
        let mut logits = vec![0.0; cfg.num_types];
        for (k, logit) in logits.iter_mut().enumerate() {
            let row = &w.data()[k * cfg.latent_dim..(k + 1) * cfg.latent_dim];
            *logit = row.iter().zip(&zv).map(|(a, b)| a * b).sum::<f64>() + b.data()[k];
        }
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let total: f64 = exps.iter().sum();
        let expected: Vec<f64> = exps.iter().map(|e| e / total).collect();

        let draws = 10_000;
        let mut counts = vec![0usize; cfg.num_types];
        for _ in 0..draws {
            let (state, _) = init_nodes(
                &mut tape,
                &weights,
                &cfg,
                &table,
                &z,
                TypeAssignment::Sample,
                Some(0),
                &mut rng,
            )
            .unwrap();
            counts[state.types[0]] += 1;
        }
        for k in 0..cfg.num_types {
            let freq = counts[k] as f64 / draws as f64;
            let sd = (expected[k] * (1.0 - expected[k]) / draws as f64).sqrt();
            assert!(
                (freq - expected[k]).abs() <= 3.0 * sd + 1e-9,
                "class {k}: freq {freq} vs {p} (sd {sd})",
                p = expected[k]
            );
        }
    }

    #[test]
    fn all_masked_forces_stop() {
        let (cfg, store, table) = setup(6);
        let mut tape = Tape::new();
        let mut bindings = ParamBindings::new();
        let weights = bind_decoder(&mut tape, &mut bindings, &store).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z = fresh_z(&mut tape, &cfg, 1, &mut rng);
        let (mut state, _) = init_nodes(
            &mut tape,
            &weights,
            &cfg,
            &table,
            &z,
            TypeAssignment::Sample,
            Some(0),
            &mut rng,
        )
        .unwrap();
        // single node: no working candidates at all
        let outcome = edge_step(
            &mut tape,
            &weights,
            &cfg,
            &mut state,
            StepMode::Sample,
            &mut rng,
        )
        .unwrap();
        assert_eq!(outcome.decision, Decision::Stop);
        let p = tape.value(outcome.target_log_prob).item().unwrap();
        assert!(p.abs() < 1e-12, "lone stop option has probability 1");
        assert!(state.focus.is_none());
    }

    #[test]
    fn uniform_scores_under_zeroed_target_net() {
        let (cfg, mut store, table) = setup(8);
        for name in ["dec.target.w1", "dec.target.b1", "dec.target.w2", "dec.target.b2"] {
            let t = store.get_mut(name).unwrap();
            *t = Tensor::zeros(t.shape());
        }
        let mut tape = Tape::new();
        let mut bindings = ParamBindings::new();
        let weights = bind_decoder(&mut tape, &mut bindings, &store).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z = fresh_z(&mut tape, &cfg, 3, &mut rng);
        let (state, _) = init_nodes(
            &mut tape,
            &weights,
            &cfg,
            &table,
            &z,
            TypeAssignment::Sample,
            Some(0),
            &mut rng,
        )
        .unwrap();
        let scores = score_candidates(&mut tape, &weights, &cfg, &state).unwrap();
        // two fresh working nodes plus stop -> probability 1/3 each
        assert_eq!(scores.candidates.len(), 2);
        for p in tape.value(scores.target_probs).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn teacher_log_prob_matches_independent_softmax() {
        let (cfg, store, table) = setup(10);
        let mut tape = Tape::new();
        let mut bindings = ParamBindings::new();
        let weights = bind_decoder(&mut tape, &mut bindings, &store).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z = fresh_z(&mut tape, &cfg, 3, &mut rng);
        let (mut state, _) = init_nodes(
            &mut tape,
            &weights,
            &cfg,
            &table,
            &z,
            TypeAssignment::Teacher(&[0, 0, 2]),
            Some(0),
            &mut rng,
        )
        .unwrap();
        let mut scores = score_candidates(&mut tape, &weights, &cfg, &state).unwrap();
        let decision = Decision::Edge {
            target: 1,
            order: BondOrder::Single,
        };
        let lp = scores
            .decision_log_prob(&mut tape, &weights, decision)
            .unwrap();

        // independent recomputation from the stored probability vectors
        let idx = scores.index_of(decision).unwrap();
        let pt = tape.value(scores.target_probs).data()[idx];
        let pl = {
            let probs = scores.label_probs(&mut tape, &weights, idx).unwrap();
            tape.value(probs).data()[0]
        };
        let expect = pt.ln() + pl.ln();
        assert!((tape.value(lp).item().unwrap() - expect).abs() < 1e-12);

        // teacher stepping with the same decision succeeds
        let outcome = edge_step(
            &mut tape,
            &weights,
            &cfg,
            &mut state,
            StepMode::Teacher(decision),
            &mut rng,
        )
        .unwrap();
        assert_eq!(outcome.decision, decision);
        assert!(state.graph.has_edge(0, 1));
        assert!(state.queue.contains(&1));
    }

    #[test]
    fn teacher_edge_to_masked_target_is_an_error() {
        let (cfg, store, table) = setup(12);
        let mut tape = Tape::new();
        let mut bindings = ParamBindings::new();
        let weights = bind_decoder(&mut tape, &mut bindings, &store).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let z = fresh_z(&mut tape, &cfg, 2, &mut rng);
        let (mut state, _) = init_nodes(
            &mut tape,
            &weights,
            &cfg,
            &table,
            &z,
            TypeAssignment::Teacher(&[0, 0]),
            Some(0),
            &mut rng,
        )
        .unwrap();
        // close node 1 manually; a teacher edge to it must now fail
        state.ledger.close(1);
        let e = edge_step(
            &mut tape,
            &weights,
            &cfg,
            &mut state,
            StepMode::Teacher(Decision::Edge {
                target: 1,
                order: BondOrder::Single,
            }),
            &mut rng,
        );
        assert!(matches!(e, Err(ModelError::TeacherEdgeMasked { .. })));
    }

    #[test]
    fn single_slot_generates_a_full_hydrogen_molecule() {
        let (cfg, store, table) = setup(14);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let g = generate(&store, &cfg, &table, 1, &mut rng).unwrap();
        assert_eq!(g.node_count(), 1);
        assert!(g.is_valid(&table));
    }

    #[test]
    fn generation_is_deterministic_under_a_seed() {
        let (cfg, store, table) = setup(16);
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            generate(&store, &cfg, &table, 6, &mut rng).unwrap()
        };
        assert_eq!(run(7), run(7));
    }

    #[test]
    fn untrained_samples_are_always_valid() {
        let (cfg, store, table) = setup(18);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..300 {
            let n = rng.gen_range(1..=9);
            let g = generate(&store, &cfg, &table, n, &mut rng).unwrap();
            assert!(g.is_valid(&table), "{g:?}");
        }
    }

    #[test]
    fn node_states_change_when_a_neighbor_type_changes() {
        let (cfg, store, table) = setup(20);
        let run = |types: &[usize]| {
            let mut tape = Tape::new();
            let mut bindings = ParamBindings::new();
            let weights = bind_decoder(&mut tape, &mut bindings, &store).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let z = fresh_z(&mut tape, &cfg, 2, &mut rng);
            let (mut state, _) = init_nodes(
                &mut tape,
                &weights,
                &cfg,
                &table,
                &z,
                TypeAssignment::Teacher(types),
                Some(0),
                &mut rng,
            )
            .unwrap();
            apply_decision(
                &mut tape,
                &weights,
                &cfg,
                &mut state,
                Decision::Edge {
                    target: 1,
                    order: BondOrder::Single,
                },
            )
            .unwrap();
            tape.value(state.node_states[0]).data().to_vec()
        };
        let a = run(&[0, 0]);
        let b = run(&[0, 2]);
        assert_ne!(a, b, "focus state must react to the neighbor's type");
    }

    #[test]
    fn frozen_states_skip_message_passing() {
        let (mut cfg, store, table) = setup(22);
        cfg.frozen_decoder_states = true;
        let mut tape = Tape::new();
        let mut bindings = ParamBindings::new();
        let weights = bind_decoder(&mut tape, &mut bindings, &store).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let z = fresh_z(&mut tape, &cfg, 2, &mut rng);
        let (mut state, _) = init_nodes(
            &mut tape,
            &weights,
            &cfg,
            &table,
            &z,
            TypeAssignment::Teacher(&[0, 0]),
            Some(0),
            &mut rng,
        )
        .unwrap();
        apply_decision(
            &mut tape,
            &weights,
            &cfg,
            &mut state,
            Decision::Edge {
                target: 1,
                order: BondOrder::Single,
            },
        )
        .unwrap();
        for v in 0..2 {
            assert_eq!(
                tape.value(state.node_states[v]).data(),
                tape.value(state.initial_states[v]).data()
            );
        }
    }
}
