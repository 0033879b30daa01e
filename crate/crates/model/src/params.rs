use autodiff::{
    glorot_matrix, glorot_vector, GruWeights, NodeId, ParamBindings, ParamStore, Tape, Tensor,
};
use rand::Rng;

use crate::config::ModelConfig;
use crate::Result;

/// One GGNN: per-bond-order edge transforms, a master-node transform and
/// initial state, and the shared GRU.
#[derive(Debug, Clone, Copy)]
pub struct GgnnWeights {
    pub edge: [NodeId; 3],
    pub master: NodeId,
    pub master_init: NodeId,
    pub gru: GruWeights,
}

#[derive(Debug, Clone, Copy)]
pub struct LinearWeights {
    pub w: NodeId,
    pub b: NodeId,
}

/// Single-hidden-layer MLP with rectifier nonlinearity, scalar output.
#[derive(Debug, Clone, Copy)]
pub struct MlpWeights {
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
}

pub fn linear_apply(tape: &mut Tape, w: &LinearWeights, x: NodeId) -> Result<NodeId> {
    let y = tape.matvec(w.w, x)?;
    Ok(tape.add(y, w.b)?)
}

pub fn mlp_apply(tape: &mut Tape, w: &MlpWeights, x: NodeId) -> Result<NodeId> {
    let h = tape.matvec(w.w1, x)?;
    let hb = tape.add(h, w.b1)?;
    let a = tape.relu(hb);
    let y = tape.matvec(w.w2, a)?;
    Ok(tape.add(y, w.b2)?)
}

fn gru_names(prefix: &str) -> [String; 9] {
    [
        format!("{prefix}.gru.update_x"),
        format!("{prefix}.gru.update_h"),
        format!("{prefix}.gru.update_b"),
        format!("{prefix}.gru.reset_x"),
        format!("{prefix}.gru.reset_h"),
        format!("{prefix}.gru.reset_b"),
        format!("{prefix}.gru.cand_x"),
        format!("{prefix}.gru.cand_h"),
        format!("{prefix}.gru.cand_b"),
    ]
}

pub fn bind_ggnn(
    tape: &mut Tape,
    bindings: &mut ParamBindings,
    store: &ParamStore,
    prefix: &str,
) -> Result<GgnnWeights> {
    let mut bind = |name: String| bindings.bind(tape, store, &name);
    let edge = [
        bind(format!("{prefix}.edge1"))?,
        bind(format!("{prefix}.edge2"))?,
        bind(format!("{prefix}.edge3"))?,
    ];
    let master = bind(format!("{prefix}.master"))?;
    let master_init = bind(format!("{prefix}.master_init"))?;
    let [ux, uh, ub, rx, rh, rb, cx, ch, cb] = gru_names(prefix);
    let gru = GruWeights {
        update_x: bind(ux)?,
        update_h: bind(uh)?,
        update_b: bind(ub)?,
        reset_x: bind(rx)?,
        reset_h: bind(rh)?,
        reset_b: bind(rb)?,
        cand_x: bind(cx)?,
        cand_h: bind(ch)?,
        cand_b: bind(cb)?,
    };
    Ok(GgnnWeights {
        edge,
        master,
        master_init,
        gru,
    })
}

pub fn bind_linear(
    tape: &mut Tape,
    bindings: &mut ParamBindings,
    store: &ParamStore,
    prefix: &str,
) -> Result<LinearWeights> {
    Ok(LinearWeights {
        w: bindings.bind(tape, store, &format!("{prefix}.w"))?,
        b: bindings.bind(tape, store, &format!("{prefix}.b"))?,
    })
}

pub fn bind_mlp(
    tape: &mut Tape,
    bindings: &mut ParamBindings,
    store: &ParamStore,
    prefix: &str,
) -> Result<MlpWeights> {
    Ok(MlpWeights {
        w1: bindings.bind(tape, store, &format!("{prefix}.w1"))?,
        b1: bindings.bind(tape, store, &format!("{prefix}.b1"))?,
        w2: bindings.bind(tape, store, &format!("{prefix}.w2"))?,
        b2: bindings.bind(tape, store, &format!("{prefix}.b2"))?,
    })
}

fn init_ggnn<R: Rng>(store: &mut ParamStore, prefix: &str, width: usize, rng: &mut R) {
    for l in 1..=3 {
        store.insert(format!("{prefix}.edge{l}"), glorot_matrix(width, width, rng));
    }
    store.insert(format!("{prefix}.master"), glorot_matrix(width, width, rng));
    store.insert(format!("{prefix}.master_init"), glorot_vector(width, rng));
    let [ux, uh, ub, rx, rh, rb, cx, ch, cb] = gru_names(prefix);
    for name in [ux, uh, rx, rh, cx, ch] {
        store.insert(name, glorot_matrix(width, width, rng));
    }
    for name in [ub, rb, cb] {
        store.insert(name, Tensor::zeros(&[width]));
    }
}

fn init_linear<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    out: usize,
    input: usize,
    rng: &mut R,
) {
    store.insert(format!("{prefix}.w"), glorot_matrix(out, input, rng));
    store.insert(format!("{prefix}.b"), Tensor::zeros(&[out]));
}

fn init_mlp<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    input: usize,
    hidden: usize,
    rng: &mut R,
) {
    store.insert(format!("{prefix}.w1"), glorot_matrix(hidden, input, rng));
    store.insert(format!("{prefix}.b1"), Tensor::zeros(&[hidden]));
    store.insert(format!("{prefix}.w2"), glorot_matrix(1, hidden, rng));
    store.insert(format!("{prefix}.b2"), Tensor::zeros(&[1]));
}

/// Fresh Glorot-initialized parameters for the whole model. The property
/// head is always allocated; it only trains when property supervision is on.
pub fn init_params<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> ParamStore {
    let w = cfg.state_width();
    let d = cfg.latent_dim;
    let phi = cfg.phi_width();
    let mut store = ParamStore::new();

    store.insert("enc.embed", glorot_matrix(cfg.num_types, w, rng));
    init_ggnn(&mut store, "enc.gnn", w, rng);
    init_linear(&mut store, "enc.mu", d, w, rng);
    init_linear(&mut store, "enc.log_sigma", d, w, rng);

    init_ggnn(&mut store, "dec.gnn", w, rng);
    store.insert("dec.stop_state", glorot_vector(w, rng));
    init_linear(&mut store, "dec.node_type", cfg.num_types, d, rng);
    init_mlp(&mut store, "dec.target", phi, cfg.hidden, rng);
    for l in 1..=3 {
        init_mlp(&mut store, &format!("dec.label{l}"), phi, cfg.hidden, rng);
    }

    init_linear(&mut store, "prop.gate", 1, d, rng);
    init_linear(&mut store, "prop.value", 1, d, rng);

    store
}
