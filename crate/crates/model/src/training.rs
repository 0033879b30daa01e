use std::io::Write;
use std::path::Path;
use std::time::Instant;

use autodiff::{accumulate_grads, Adam, AdamConfig, NodeId, ParamBindings, ParamStore, Tape};
use chem::{AtomTypeTable, MolecularGraph};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
use crate::config::ModelConfig;
use crate::dataset::{Dataset, PropertyNorm};
use crate::decoder::{
    bind_decoder, build_state_at, init_nodes, score_candidates, DecoderWeights, GenerationState,
    TypeAssignment,
};
use crate::encoder::{encode, kl_loss, sample_latents};
use crate::params::{bind_linear, init_params, linear_apply, mlp_apply};
use crate::propopt::predict;
use crate::trace::{extract_trace, extract_traces, TraceSample, Transition};
use crate::{derive_seed, ModelError, Result};

/// What supervises the edge term for one molecule.
pub enum Supervision<'a> {
    /// Replay whole traces in order (the default, one or a few per graph).
    Traces(&'a [TraceSample]),
    /// Score stored transitions independently (multi-trace subsampling).
    Transitions(&'a [Transition]),
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct LossBreakdown {
    /// Negative node-type log-likelihood.
    pub node_type: f64,
    /// Negative edge log-likelihood credit.
    pub edge: f64,
    pub kl: f64,
    pub property: f64,
    pub total: f64,
}

/// Mean log-probability credit over every valid expansion at one state.
fn transition_credit(
    tape: &mut Tape,
    weights: &DecoderWeights,
    cfg: &ModelConfig,
    state: &GenerationState,
    transition: &Transition,
) -> Result<NodeId> {
    if state.focus != Some(transition.focus) {
        return Err(ModelError::TraceMismatch {
            expected: transition.focus,
            got: state.focus,
        });
    }
    let mut scores = score_candidates(tape, weights, cfg, state)?;
    let parts: Vec<NodeId> = transition
        .candidates
        .iter()
        .map(|&d| scores.decision_log_prob(tape, weights, d))
        .collect::<Result<_>>()?;
    let sum = tape.add_n(&parts)?;
    Ok(tape.scale(sum, 1.0 / parts.len() as f64))
}

/// Teacher-forced replay of one trace; returns the per-state credits.
fn replay_trace(
    tape: &mut Tape,
    weights: &DecoderWeights,
    cfg: &ModelConfig,
    table: &AtomTypeTable,
    graph: &MolecularGraph,
    z: &[NodeId],
    trace: &TraceSample,
) -> Result<Vec<NodeId>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0); // teacher mode draws nothing
    let (mut state, _) = init_nodes(
        tape,
        weights,
        cfg,
        table,
        z,
        TypeAssignment::Teacher(graph.types()),
        Some(trace.start),
        &mut rng,
    )?;
    let mut credits = Vec::with_capacity(trace.transitions.len());
    for transition in &trace.transitions {
        credits.push(transition_credit(tape, weights, cfg, &state, transition)?);
        crate::decoder::apply_decision(tape, weights, cfg, &mut state, transition.chosen)?;
    }
    Ok(credits)
}

/// Edge log-likelihood for the one-shot independent-edge decoder: a
/// Bernoulli per node pair plus a label term on present edges.
fn independent_edge_term(
    tape: &mut Tape,
    weights: &DecoderWeights,
    cfg: &ModelConfig,
    table: &AtomTypeTable,
    graph: &MolecularGraph,
    z: &[NodeId],
) -> Result<NodeId> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut state, _) = init_nodes(
        tape,
        weights,
        cfg,
        table,
        z,
        TypeAssignment::Teacher(graph.types()),
        Some(0),
        &mut rng,
    )?;
    state.global_now = state.global_init;
    let n = graph.node_count();
    let ledger = chem::BondLedger::for_types(graph.types(), table)?;
    let mut parts = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let f = crate::decoder::independent_pair_features(tape, cfg, &state, u, v)?;
            let logit = mlp_apply(tape, &weights.target, f)?;
            let p = tape.sigmoid(logit);
            match graph.edge_order(u, v) {
                Some(order) => {
                    parts.push(tape.ln(p));
                    let allowed = [
                        1 <= ledger.remaining(u).min(ledger.remaining(v)),
                        2 <= ledger.remaining(u).min(ledger.remaining(v)),
                        3 <= ledger.remaining(u).min(ledger.remaining(v)),
                    ];
                    let logits: Vec<NodeId> = weights
                        .label
                        .iter()
                        .map(|w| mlp_apply(tape, w, f))
                        .collect::<Result<_>>()?;
                    let stacked = tape.concat(&logits)?;
                    let probs = tape.masked_softmax(stacked, &allowed)?;
                    let picked = tape.pick(probs, order.bonds() as usize - 1)?;
                    parts.push(tape.ln(picked));
                }
                None => {
                    let q = tape.affine(p, -1.0, 1.0);
                    parts.push(tape.ln(q));
                }
            }
        }
    }
    if parts.is_empty() {
        return Ok(tape.scalar(0.0));
    }
    Ok(tape.add_n(&parts)?)
}

/// Build the full objective for one molecule on one tape:
/// reconstruction (node types + edge credits), the KL regularizer scaled by
/// `lambda_latent`, and optionally a property regression term scaled by
/// `lambda_property`.
#[allow(clippy::too_many_arguments)]
pub fn total_loss<R: Rng>(
    tape: &mut Tape,
    bindings: &mut ParamBindings,
    store: &ParamStore,
    cfg: &ModelConfig,
    table: &AtomTypeTable,
    graph: &MolecularGraph,
    supervision: Supervision<'_>,
    lambda_latent: f64,
    lambda_property: f64,
    property_target: Option<f64>,
    rng: &mut R,
) -> Result<(NodeId, LossBreakdown)> {
    let posteriors = encode(tape, bindings, store, cfg, graph)?;
    let z = sample_latents(tape, &posteriors, rng)?;
    let kl = kl_loss(tape, &posteriors)?;
    let weights = bind_decoder(tape, bindings, store)?;

    // node-type term under the encoder's alignment
    let type_head = bind_linear(tape, bindings, store, "dec.node_type")?;
    let mut type_lps = Vec::with_capacity(z.len());
    for (&zv, &ty) in z.iter().zip(graph.types()) {
        let logits = linear_apply(tape, &type_head, zv)?;
        let probs = tape.softmax(logits)?;
        let picked = tape.pick(probs, ty)?;
        type_lps.push(tape.ln(picked));
    }
    let node_term = tape.add_n(&type_lps)?;

    let edge_term = if cfg.independent_edges {
        independent_edge_term(tape, &weights, cfg, table, graph, &z)?
    } else {
        match supervision {
            Supervision::Traces(traces) => {
                let mut credits = Vec::new();
                for trace in traces {
                    credits.extend(replay_trace(tape, &weights, cfg, table, graph, &z, trace)?);
                }
                let sum = tape.add_n(&credits)?;
                tape.scale(sum, 1.0 / traces.len().max(1) as f64)
            }
            Supervision::Transitions(transitions) => {
                let mut credits = Vec::with_capacity(transitions.len());
                for t in transitions {
                    let state = build_state_at(
                        tape,
                        &weights,
                        cfg,
                        table,
                        &z,
                        graph.types(),
                        &t.edges_before,
                        &t.closed_before,
                        t.focus,
                    )?;
                    credits.push(transition_credit(tape, &weights, cfg, &state, t)?);
                }
                tape.add_n(&credits)?
            }
        }
    };

    let recon_pos = tape.add(node_term, edge_term)?;
    let recon = tape.neg(recon_pos);
    let kl_scaled = tape.scale(kl, lambda_latent);
    let mut total = tape.add(recon, kl_scaled)?;

    let mut property_loss_value = 0.0;
    if let Some(q) = property_target {
        let gate = bind_linear(tape, bindings, store, "prop.gate")?;
        let value = bind_linear(tape, bindings, store, "prop.value")?;
        let pred = predict(tape, &gate, &value, &z)?;
        let target = tape.scalar(q);
        let diff = tape.sub(pred, target)?;
        let sq = tape.square(diff);
        property_loss_value = tape.value(sq).item()?;
        let scaled = tape.scale(sq, lambda_property);
        total = tape.add(total, scaled)?;
    }

    let breakdown = LossBreakdown {
        node_type: -tape.value(node_term).item()?,
        edge: -tape.value(edge_term).item()?,
        kl: tape.value(kl).item()?,
        property: property_loss_value,
        total: tape.value(total).item()?,
    };
    Ok((total, breakdown))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lambda_latent: f64,
    pub lambda_property: f64,
    /// Traces extracted per molecule; above 1, transitions are pooled and
    /// subsampled back to one trace's worth per molecule.
    pub k_traces: usize,
    /// Fraction of total steps over which the KL weight anneals in
    /// linearly; 0 disables warm-up.
    pub kl_warmup_frac: f64,
    pub seed: u64,
    /// Train the property head against this surrogate (normalized to [0,1]).
    pub property: Option<String>,
    /// Save a checkpoint every this many epochs (0: only at the end).
    pub checkpoint_every: usize,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        TrainConfig {
            model,
            epochs: 20,
            batch_size: 32,
            lr: 1e-3,
            lambda_latent: 0.3,
            lambda_property: 10.0,
            k_traces: 1,
            kl_warmup_frac: 0.0,
            seed: 0,
            property: None,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub node_type: f64,
    pub edge: f64,
    pub kl: f64,
    pub property: f64,
    pub total: f64,
    pub seconds: f64,
}

pub fn write_loss_csv(path: &Path, logs: &[EpochLog]) -> Result<()> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
    writeln!(f, "epoch,node_type,edge,kl,property,total,seconds")
        .map_err(|e| ModelError::Io(e.to_string()))?;
    for l in logs {
        writeln!(
            f,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.3}",
            l.epoch, l.node_type, l.edge, l.kl, l.property, l.total, l.seconds
        )
        .map_err(|e| ModelError::Io(e.to_string()))?;
    }
    Ok(())
}

/// Minibatch Adam over the dataset. Deterministic under a fixed seed: every
/// random draw (shuffles, trace extraction, latent noise) comes from
/// counters derived from (seed, epoch, graph index), so concurrency and
/// resumption cannot change the arithmetic.
pub fn train(
    dataset: &Dataset,
    table: &AtomTypeTable,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    resume: Option<Checkpoint>,
) -> Result<(Checkpoint, Vec<EpochLog>)> {
    train_with_progress(dataset, table, cfg, out_dir, resume, |_| {})
}

/// `train` with a per-epoch callback (progress printing, early inspection).
pub fn train_with_progress(
    dataset: &Dataset,
    table: &AtomTypeTable,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    resume: Option<Checkpoint>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(Checkpoint, Vec<EpochLog>)> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset("training set".into()));
    }
    let n = dataset.len();
    let model_cfg = cfg.model.clone();
    if table.len() != model_cfg.num_types {
        return Err(ModelError::TableMismatch {
            table: table.len(),
            config: model_cfg.num_types,
        });
    }

    let property_targets: Option<(Vec<f64>, PropertyNorm)> = match &cfg.property {
        Some(name) => {
            let raw = dataset.property_values(name, table)?;
            let norm = PropertyNorm::fit(&raw);
            Some((raw.iter().map(|&v| norm.apply(v)).collect(), norm))
        }
        None => None,
    };

    let (mut params, mut optimizer, start_epoch) = match resume {
        Some(ckpt) => {
            let opt = ckpt
                .optimizer
                .unwrap_or_else(|| Adam::new(AdamConfig { lr: cfg.lr, ..Default::default() }));
            (ckpt.params, opt, ckpt.epoch)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0, 0));
            (
                init_params(&model_cfg, &mut rng),
                Adam::new(AdamConfig { lr: cfg.lr, ..Default::default() }),
                0,
            )
        }
    };

    // multi-trace mode: enumerate k traces once, pool the transitions
    let pooled: Option<Vec<Vec<Transition>>> = if cfg.k_traces > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1, 0));
        Some(
            dataset
                .graphs
                .iter()
                .map(|g| {
                    extract_traces(g, cfg.k_traces, &mut rng)
                        .into_iter()
                        .flat_map(|t| t.transitions)
                        .collect()
                })
                .collect(),
        )
    } else {
        None
    };

    let batches_per_epoch = n.div_ceil(cfg.batch_size.max(1));
    let total_steps = (cfg.epochs * batches_per_epoch).max(1);
    let mut logs = Vec::new();

    for epoch in start_epoch..cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..n).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2, epoch as u64));
        order.shuffle(&mut shuffle_rng);

        let mut epoch_sums = LossBreakdown::default();
        for (batch_index, batch) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let step = epoch * batches_per_epoch + batch_index;
            let lambda_eff = if cfg.kl_warmup_frac > 0.0 {
                let ramp = (step as f64 / (cfg.kl_warmup_frac * total_steps as f64)).min(1.0);
                cfg.lambda_latent * ramp
            } else {
                cfg.lambda_latent
            };

            let results: Vec<Result<(autodiff::GradMap, LossBreakdown)>> = batch
                .par_iter()
                .map(|&gi| {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 3 + epoch as u64, gi as u64));
                    let graph = &dataset.graphs[gi];
                    let mut tape = Tape::new();
                    let mut bindings = ParamBindings::new();

                    let trace_storage;
                    let sub_storage;
                    let supervision = match &pooled {
                        Some(pool) => {
                            let per = &pool[gi];
                            let want = graph.edge_count() + graph.node_count();
                            let mut idx: Vec<usize> = (0..per.len()).collect();
                            idx.shuffle(&mut rng);
                            idx.truncate(want);
                            sub_storage = idx
                                .into_iter()
                                .map(|i| per[i].clone())
                                .collect::<Vec<_>>();
                            Supervision::Transitions(&sub_storage)
                        }
                        None => {
                            trace_storage = vec![extract_trace(graph, &mut rng)];
                            Supervision::Traces(&trace_storage)
                        }
                    };
                    let target = property_targets.as_ref().map(|(vals, _)| vals[gi]);
                    let (loss, breakdown) = total_loss(
                        &mut tape,
                        &mut bindings,
                        &params,
                        &model_cfg,
                        table,
                        graph,
                        supervision,
                        lambda_eff,
                        cfg.lambda_property,
                        target,
                        &mut rng,
                    )?;
                    if !breakdown.total.is_finite() {
                        return Err(ModelError::NonFiniteLoss {
                            epoch,
                            graph: gi,
                            value: breakdown.total,
                        });
                    }
                    let grads = tape.backward(loss)?;
                    Ok((bindings.collect(&tape, &grads, &params), breakdown))
                })
                .collect();

            let mut batch_grads = params.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for r in results {
                let (g, b) = r?;
                accumulate_grads(&mut batch_grads, &g, scale)?;
                epoch_sums.node_type += b.node_type;
                epoch_sums.edge += b.edge;
                epoch_sums.kl += b.kl;
                epoch_sums.property += b.property;
                epoch_sums.total += b.total;
            }
            optimizer.step(&mut params, &batch_grads)?;
        }

        let inv = 1.0 / n as f64;
        let log = EpochLog {
            epoch: epoch + 1,
            node_type: epoch_sums.node_type * inv,
            edge: epoch_sums.edge * inv,
            kl: epoch_sums.kl * inv,
            property: epoch_sums.property * inv,
            total: epoch_sums.total * inv,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&log);
        logs.push(log);

        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
                let ckpt = snapshot(cfg, table, &params, &optimizer, epoch + 1, dataset, &property_targets);
                ckpt.save(&dir.join(format!("checkpoint_epoch{:03}.json", epoch + 1)))?;
            }
        }
    }

    let final_ckpt = snapshot(
        cfg,
        table,
        &params,
        &optimizer,
        cfg.epochs,
        dataset,
        &property_targets,
    );
    if let Some(dir) = out_dir {
        final_ckpt.save(&dir.join("checkpoint.json"))?;
        write_loss_csv(&dir.join("loss.csv"), &logs)?;
    }
    Ok((final_ckpt, logs))
}

fn snapshot(
    cfg: &TrainConfig,
    table: &AtomTypeTable,
    params: &ParamStore,
    optimizer: &Adam,
    epoch: usize,
    dataset: &Dataset,
    property_targets: &Option<(Vec<f64>, PropertyNorm)>,
) -> Checkpoint {
    Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        model: cfg.model.clone(),
        types: table.iter().cloned().collect(),
        params: params.clone(),
        optimizer: Some(optimizer.clone()),
        epoch,
        size_policy: dataset.size_policy(),
        property: cfg.property.clone(),
        property_norm: property_targets.as_ref().map(|(_, n)| *n),
    }
}
