use autodiff::{NodeId, ParamBindings, ParamStore, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::dataset::surrogate_property;
use crate::decoder::{bind_decoder, decode_from_z};
use crate::params::{bind_linear, linear_apply, LinearWeights};
use crate::{ModelError, Result};

/// Gated regression from node latents to a scalar:
/// R(z) = sum_v sigmoid(gate(z_v)) * value(z_v).
pub fn predict(
    tape: &mut Tape,
    gate: &LinearWeights,
    value: &LinearWeights,
    z: &[NodeId],
) -> Result<NodeId> {
    let mut parts = Vec::with_capacity(z.len());
    for &zv in z {
        let g = linear_apply(tape, gate, zv)?;
        let s = tape.sigmoid(g);
        let v = linear_apply(tape, value, zv)?;
        parts.push(tape.mul(s, v)?);
    }
    Ok(tape.add_n(&parts)?)
}

/// Squared distance between the regression output and a label.
pub fn regression_loss(
    tape: &mut Tape,
    gate: &LinearWeights,
    value: &LinearWeights,
    z: &[NodeId],
    label: f64,
) -> Result<NodeId> {
    let pred = predict(tape, gate, value, z)?;
    let target = tape.scalar(label);
    let diff = tape.sub(pred, target)?;
    Ok(tape.square(diff))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AscentConfig {
    /// Initial gradient-ascent step size.
    pub step_size: f64,
    pub max_iters: usize,
    /// Weight of the squared-norm pull toward the prior.
    pub prior_weight: f64,
    /// Stop once an accepted step improves the objective by less than this.
    pub tolerance: f64,
    /// Step halvings tried before declaring the iterate converged.
    pub max_halvings: usize,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            step_size: 0.1,
            max_iters: 80,
            prior_weight: 0.02,
            tolerance: 1e-7,
            max_halvings: 10,
        }
    }
}

/// One point of an ascent trajectory.
#[derive(Debug, Clone)]
pub struct AscentPoint {
    pub z: Vec<Tensor>,
    /// Regression output at this point.
    pub predicted: f64,
    /// Penalized objective (prediction minus the prior pull).
    pub objective: f64,
}

fn objective_value(
    store: &ParamStore,
    z: &[Tensor],
    rho: f64,
) -> Result<(f64, f64)> {
    let mut tape = Tape::new();
    let mut bindings = ParamBindings::new();
    let gate = bind_linear(&mut tape, &mut bindings, store, "prop.gate")?;
    let value = bind_linear(&mut tape, &mut bindings, store, "prop.value")?;
    let ids: Vec<NodeId> = z.iter().map(|t| tape.leaf(t.clone())).collect();
    let pred = predict(&mut tape, &gate, &value, &ids)?;
    let predicted = tape.value(pred).item()?;
    let penalty: f64 = z.iter().map(|t| t.data().iter().map(|x| x * x).sum::<f64>()).sum();
    Ok((predicted, predicted - rho * penalty))
}

fn objective_gradient(store: &ParamStore, z: &[Tensor], rho: f64) -> Result<Vec<Tensor>> {
    let mut tape = Tape::new();
    let mut bindings = ParamBindings::new();
    let gate = bind_linear(&mut tape, &mut bindings, store, "prop.gate")?;
    let value = bind_linear(&mut tape, &mut bindings, store, "prop.value")?;
    let ids: Vec<NodeId> = z.iter().map(|t| tape.leaf(t.clone())).collect();
    let pred = predict(&mut tape, &gate, &value, &ids)?;
    let penalties: Vec<NodeId> = ids
        .iter()
        .map(|&id| {
            let sq = tape.square(id);
            Ok(tape.sum(sq))
        })
        .collect::<Result<_>>()?;
    let pen_total = tape.add_n(&penalties)?;
    let pen_scaled = tape.scale(pen_total, -rho);
    let objective = tape.add(pred, pen_scaled)?;
    let grads = tape.backward(objective)?;
    Ok(ids
        .iter()
        .map(|&id| grads.wrt_or_zeros(id, &tape))
        .collect())
}

/// Gradient ascent on R(z) - rho * ||z||^2 with backtracking line search
/// (step halved until the objective improves), so the penalized objective
/// is non-decreasing along the returned trajectory.
pub fn optimize_latent(
    store: &ParamStore,
    z0: &[Tensor],
    cfg: &AscentConfig,
) -> Result<Vec<AscentPoint>> {
    let mut z: Vec<Tensor> = z0.to_vec();
    let (predicted, objective) = objective_value(store, &z, cfg.prior_weight)?;
    let mut trajectory = vec![AscentPoint {
        z: z.clone(),
        predicted,
        objective,
    }];

    for _ in 0..cfg.max_iters {
        let current = trajectory.last().expect("non-empty").objective;
        let grad = objective_gradient(store, &z, cfg.prior_weight)?;
        let mut step = cfg.step_size;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let mut candidate = z.clone();
            for (c, g) in candidate.iter_mut().zip(&grad) {
                c.add_assign_scaled(g, step)?;
            }
            let (pred, obj) = objective_value(store, &candidate, cfg.prior_weight)?;
            if obj > current {
                accepted = Some((candidate, pred, obj));
                break;
            }
            step *= 0.5;
        }
        let Some((next, pred, obj)) = accepted else {
            break; // no improving step at any tried scale
        };
        let gain = obj - current;
        z = next;
        trajectory.push(AscentPoint {
            z: z.clone(),
            predicted: pred,
            objective: obj,
        });
        if gain < cfg.tolerance {
            break;
        }
    }
    Ok(trajectory)
}

/// One row of an optimization report: a decoded molecule at some point
/// along the latent trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryRow {
    /// Ascent iteration this row was decoded at.
    pub step: usize,
    /// Regression output (the property scale the head was trained on).
    pub predicted: f64,
    /// Surrogate property of the decoded molecule, same normalized scale.
    pub actual: f64,
    pub graph: chem::MolecularGraph,
    pub smiles: String,
}

/// Run latent ascent from `z0` and decode molecules at `points` evenly
/// spaced trajectory positions (always including both ends). Decoding is
/// deterministic: argmax node types and greedy edge choices.
pub fn optimize_molecule(
    ckpt: &Checkpoint,
    z0: &[Tensor],
    ascent: &AscentConfig,
    points: usize,
) -> Result<Vec<TrajectoryRow>> {
    let property = ckpt
        .property
        .clone()
        .ok_or_else(|| ModelError::UnknownProperty("checkpoint has no property head".into()))?;
    let table = ckpt.table()?;
    let trajectory = optimize_latent(&ckpt.params, z0, ascent)?;

    let count = points.max(2).min(trajectory.len());
    let picks: Vec<usize> = if trajectory.len() == 1 {
        vec![0]
    } else {
        (0..count)
            .map(|i| i * (trajectory.len() - 1) / (count - 1))
            .collect()
    };

    let mut rows = Vec::with_capacity(picks.len());
    for idx in picks {
        let point = &trajectory[idx];
        let mut tape = Tape::new();
        let mut bindings = ParamBindings::new();
        let weights = bind_decoder(&mut tape, &mut bindings, &ckpt.params)?;
        let z_ids: Vec<NodeId> = point.z.iter().map(|t| tape.leaf(t.clone())).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0); // greedy decoding draws nothing
        let graph = decode_from_z(
            &mut tape,
            &weights,
            &ckpt.model,
            &table,
            &z_ids,
            &mut rng,
            true,
        )?;
        let raw = surrogate_property(&property, &graph, &table)?;
        let actual = match ckpt.property_norm {
            Some(norm) => norm.apply(raw),
            None => raw,
        };
        let smiles = chem::smiles::write(&graph, &table)?;
        rows.push(TrajectoryRow {
            step: idx,
            predicted: point.predicted,
            actual,
            graph,
            smiles,
        });
    }
    Ok(rows)
}
