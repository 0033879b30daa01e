use autodiff::{NodeId, ParamBindings, ParamStore, Tape, Tensor};
use chem::MolecularGraph;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::ModelConfig;
use crate::ggnn::propagate;
use crate::params::{bind_ggnn, bind_linear, linear_apply};
use crate::{ModelError, Result};

/// Floor applied to posterior standard deviations.
const SIGMA_FLOOR: f64 = 1e-10;

/// Per-node diagonal Gaussian posterior, on tape.
#[derive(Debug, Clone, Copy)]
pub struct NodePosterior {
    pub mu: NodeId,
    pub sigma: NodeId,
    pub log_sigma: NodeId,
}

/// Embed each node of an input graph to a diagonal Gaussian in latent
/// space: message passing from learned type embeddings, then linear heads
/// for the mean and log standard deviation.
pub fn encode(
    tape: &mut Tape,
    bindings: &mut ParamBindings,
    store: &ParamStore,
    cfg: &ModelConfig,
    graph: &MolecularGraph,
) -> Result<Vec<NodePosterior>> {
    if graph.node_count() == 0 {
        return Err(ModelError::EmptyGraph);
    }
    for &t in graph.types() {
        if t >= cfg.num_types {
            return Err(ModelError::TypeOutOfRange {
                type_index: t,
                num_types: cfg.num_types,
            });
        }
    }
    let embed = bindings.bind(tape, store, "enc.embed")?;
    let weights = bind_ggnn(tape, bindings, store, "enc.gnn")?;
    let mu_head = bind_linear(tape, bindings, store, "enc.mu")?;
    let sigma_head = bind_linear(tape, bindings, store, "enc.log_sigma")?;

    let init: Vec<NodeId> = graph
        .types()
        .iter()
        .map(|&t| tape.row(embed, t))
        .collect::<std::result::Result<_, autodiff::AutodiffError>>()?;
    let states = propagate(tape, &weights, cfg.rounds, &init, &graph.adjacency())?;

    let mut posteriors = Vec::with_capacity(states.len());
    for &h in &states {
        let mu = linear_apply(tape, &mu_head, h)?;
        let log_sigma = linear_apply(tape, &sigma_head, h)?;
        let exp = tape.exp(log_sigma);
        let sigma = tape.clamp_min(exp, SIGMA_FLOOR);
        posteriors.push(NodePosterior {
            mu,
            sigma,
            log_sigma,
        });
    }
    Ok(posteriors)
}

/// Reparameterized draws: z = mu + sigma .* eps with eps ~ N(0, I), so
/// gradients flow to both heads.
pub fn sample_latents<R: Rng>(
    tape: &mut Tape,
    posteriors: &[NodePosterior],
    rng: &mut R,
) -> Result<Vec<NodeId>> {
    posteriors
        .iter()
        .map(|p| {
            let d = tape.value(p.mu).numel();
            let eps: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let eps = tape.leaf(Tensor::vector(eps));
            let scaled = tape.mul(p.sigma, eps)?;
            Ok(tape.add(p.mu, scaled)?)
        })
        .collect()
}

/// Encode a graph and return plain latent tensors: the posterior means, or
/// reparameterized draws when `sample` is set. Convenience for callers that
/// only need latents (reconstruction, latent optimization).
pub fn encode_to_tensors<R: Rng>(
    store: &ParamStore,
    cfg: &ModelConfig,
    graph: &MolecularGraph,
    sample: bool,
    rng: &mut R,
) -> Result<Vec<Tensor>> {
    let mut tape = Tape::new();
    let mut bindings = ParamBindings::new();
    let posteriors = encode(&mut tape, &mut bindings, store, cfg, graph)?;
    if sample {
        let z = sample_latents(&mut tape, &posteriors, rng)?;
        Ok(z.iter().map(|&id| tape.value(id).clone()).collect())
    } else {
        Ok(posteriors
            .iter()
            .map(|p| tape.value(p.mu).clone())
            .collect())
    }
}

/// KL divergence from the posteriors to the standard normal prior:
/// sum over nodes and coordinates of (mu^2 + sigma^2 - 1 - 2 ln sigma) / 2.
pub fn kl_loss(tape: &mut Tape, posteriors: &[NodePosterior]) -> Result<NodeId> {
    let mut per_node = Vec::with_capacity(posteriors.len());
    for p in posteriors {
        let mu2 = tape.square(p.mu);
        let sigma2 = tape.square(p.sigma);
        let quad = tape.add(mu2, sigma2)?;
        let log_term = tape.affine(p.log_sigma, -2.0, -1.0);
        let combined = tape.add(quad, log_term)?;
        per_node.push(tape.sum(combined));
    }
    let total = tape.add_n(&per_node)?;
    Ok(tape.scale(total, 0.5))
}
