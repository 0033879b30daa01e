use crate::tensor::Tensor;
use crate::{AutodiffError, Result};

/// Arguments of `ln` and masked-softmax probabilities are clamped away from
/// zero by this floor before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-10;

/// `exp` arguments are clamped to this magnitude so forward values stay finite.
const EXP_CLAMP: f64 = 700.0;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    AddN(Vec<NodeId>),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// k * x + b, elementwise; the offset only matters in the forward pass.
    Affine(NodeId, f64, #[allow(dead_code)] f64),
    /// (matrix, vector) -> vector
    MatVec(NodeId, NodeId),
    /// Select one matrix row, e.g. an embedding lookup.
    Row(NodeId, usize),
    Concat(Vec<NodeId>),
    /// Select one element as a 1-element tensor.
    Pick(NodeId, usize),
    Sum(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Square(NodeId),
    ClampMin(NodeId, f64),
    MaskedSoftmax(NodeId, Vec<bool>),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Record of a forward computation: values are computed eagerly as ops are
/// pushed, and `backward` replays the record in reverse. Parents always
/// precede children, so insertion order is a valid topological order.
///
/// A tape is single-writer; run independent computations on independent tapes.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`]. Nodes the loss does not
/// reach have no entry; callers that need dense gradients ask for zeros.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `id`, or zeros of its value shape if the loss never
    /// reached it.
    pub fn wrt_or_zeros(&self, id: NodeId, tape: &Tape) -> Tensor {
        match self.wrt(id) {
            Some(g) => g.clone(),
            None => Tensor::zeros(tape.value(id).shape()),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Record an input value. Leaves participate in backward like any other
    /// node; whether a leaf is a trainable parameter is the caller's business.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn scalar(&mut self, x: f64) -> NodeId {
        self.leaf(Tensor::scalar(x))
    }

    fn binary_same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if !self.value(a).same_shape(self.value(b)) {
            return Err(AutodiffError::ShapeMismatch {
                op,
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("add", a, b)?;
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b))?;
        Ok(self.push(Op::Add(a, b), v))
    }

    /// Sum of any number of same-shape tensors.
    pub fn add_n(&mut self, ids: &[NodeId]) -> Result<NodeId> {
        let first = *ids.first().ok_or(AutodiffError::BadShape {
            op: "add_n",
            expected: "at least one operand",
            got: vec![],
        })?;
        let mut v = self.value(first).clone();
        for &id in &ids[1..] {
            self.binary_same_shape("add_n", first, id)?;
            v.add_assign(self.value(id))?;
        }
        Ok(self.push(Op::AddN(ids.to_vec()), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("sub", a, b)?;
        let mut v = self.value(a).clone();
        v.add_assign_scaled(self.value(b), -1.0)?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("mul", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let v = Tensor::from_vec(self.value(a).shape(), data)?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    /// k * x + b, elementwise.
    pub fn affine(&mut self, a: NodeId, k: f64, b: f64) -> NodeId {
        let data = self.value(a).data().iter().map(|x| k * x + b).collect();
        let v = Tensor::from_vec(self.value(a).shape(), data).expect("same shape");
        self.push(Op::Affine(a, k, b), v)
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        self.affine(a, k, 0.0)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.affine(a, -1.0, 0.0)
    }

    /// Matrix-vector product: `m` is `[rows, cols]`, `x` is `[cols]`.
    pub fn matvec(&mut self, m: NodeId, x: NodeId) -> Result<NodeId> {
        let mat = self.value(m);
        let vec = self.value(x);
        if !mat.is_matrix() || !vec.is_vector() || mat.cols() != vec.numel() {
            return Err(AutodiffError::ShapeMismatch {
                op: "matvec",
                lhs: mat.shape().to_vec(),
                rhs: vec.shape().to_vec(),
            });
        }
        let rows = mat.rows();
        let cols = mat.cols();
        let mut out = vec![0.0; rows];
        let md = mat.data();
        let xd = vec.data();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &md[i * cols..(i + 1) * cols];
            *o = row.iter().zip(xd).map(|(w, v)| w * v).sum();
        }
        Ok(self.push(Op::MatVec(m, x), Tensor::vector(out)))
    }

    /// Row `i` of a matrix, as a vector.
    pub fn row(&mut self, m: NodeId, i: usize) -> Result<NodeId> {
        let mat = self.value(m);
        if !mat.is_matrix() {
            return Err(AutodiffError::BadShape {
                op: "row",
                expected: "a matrix",
                got: mat.shape().to_vec(),
            });
        }
        if i >= mat.rows() {
            return Err(AutodiffError::IndexOutOfBounds {
                index: i,
                shape: mat.shape().to_vec(),
            });
        }
        let cols = mat.cols();
        let v = Tensor::vector(mat.data()[i * cols..(i + 1) * cols].to_vec());
        Ok(self.push(Op::Row(m, i), v))
    }

    /// Concatenate vectors (or scalars) into one vector.
    pub fn concat(&mut self, ids: &[NodeId]) -> Result<NodeId> {
        if ids.is_empty() {
            return Err(AutodiffError::BadShape {
                op: "concat",
                expected: "at least one operand",
                got: vec![],
            });
        }
        let mut data = Vec::new();
        for &id in ids {
            data.extend_from_slice(self.value(id).data());
        }
        Ok(self.push(Op::Concat(ids.to_vec()), Tensor::vector(data)))
    }

    /// Element `i` as a 1-element tensor.
    pub fn pick(&mut self, a: NodeId, i: usize) -> Result<NodeId> {
        let v = self.value(a);
        if i >= v.numel() {
            return Err(AutodiffError::IndexOutOfBounds {
                index: i,
                shape: v.shape().to_vec(),
            });
        }
        let out = Tensor::scalar(v.data()[i]);
        Ok(self.push(Op::Pick(a, i), out))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).numel().max(1);
        let s = self.sum(a);
        self.affine(s, 1.0 / n as f64, 0.0)
    }

    fn unary(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let data = self.value(a).data().iter().map(|&x| f(x)).collect();
        let v = Tensor::from_vec(self.value(a).shape(), data).expect("same shape");
        self.push(op, v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Sigmoid(a), |x| 1.0 / (1.0 + (-x).exp()))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Exp(a), |x| x.clamp(-EXP_CLAMP, EXP_CLAMP).exp())
    }

    /// Natural log with the argument clamped to at least [`LOG_FLOOR`].
    pub fn ln(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Ln(a), |x| x.max(LOG_FLOOR).ln())
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn clamp_min(&mut self, a: NodeId, floor: f64) -> NodeId {
        self.unary(a, Op::ClampMin(a, floor), |x| x.max(floor))
    }

    /// Probability vector over the unmasked entries of `logits`; masked
    /// entries come out exactly zero and receive no gradient.
    pub fn masked_softmax(&mut self, logits: NodeId, mask: &[bool]) -> Result<NodeId> {
        let v = self.value(logits);
        if !v.is_vector() || v.numel() != mask.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "masked_softmax",
                lhs: v.shape().to_vec(),
                rhs: vec![mask.len()],
            });
        }
        let mut max = f64::NEG_INFINITY;
        for (x, &m) in v.data().iter().zip(mask) {
            if m && *x > max {
                max = *x;
            }
        }
        if max == f64::NEG_INFINITY {
            return Err(AutodiffError::NoUnmaskedEntry);
        }
        let mut exps = vec![0.0; mask.len()];
        let mut total = 0.0;
        for i in 0..mask.len() {
            if mask[i] {
                exps[i] = (v.data()[i] - max).exp();
                total += exps[i];
            }
        }
        for e in exps.iter_mut() {
            *e /= total;
        }
        Ok(self.push(
            Op::MaskedSoftmax(logits, mask.to_vec()),
            Tensor::vector(exps),
        ))
    }

    /// Softmax with every entry unmasked.
    pub fn softmax(&mut self, logits: NodeId) -> Result<NodeId> {
        let n = self.value(logits).numel();
        self.masked_softmax(logits, &vec![true; n])
    }

    /// Reverse pass from a scalar loss. Returns gradients for every node the
    /// loss reaches; each node is visited exactly once.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(AutodiffError::NonScalarLoss {
                got: lv.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.0).rev() {
            if grads[id].is_none() {
                continue;
            }
            // Parents always have smaller indices, so split to get a shared
            // borrow of this node's gradient and mutable access to parents'.
            let (lower, upper) = grads.split_at_mut(id);
            let g = upper[0].as_ref().expect("checked above");
            self.propagate(&self.nodes[id], g, lower)?;
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let mut acc = |id: NodeId, contrib: Contrib| -> Result<()> {
            let shape = self.value(id).shape().to_vec();
            let slot = grads[id.0].get_or_insert_with(|| Tensor::zeros(&shape));
            contrib.apply(slot.data_mut());
            Ok(())
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, Contrib::Dense(g.data(), 1.0))?;
                acc(*b, Contrib::Dense(g.data(), 1.0))?;
            }
            Op::AddN(ids) => {
                for &id in ids {
                    acc(id, Contrib::Dense(g.data(), 1.0))?;
                }
            }
            Op::Sub(a, b) => {
                acc(*a, Contrib::Dense(g.data(), 1.0))?;
                acc(*b, Contrib::Dense(g.data(), -1.0))?;
            }
            Op::Mul(a, b) => {
                let bd = self.value(*b).data();
                let ad = self.value(*a).data();
                let ga: Vec<f64> = g.data().iter().zip(bd).map(|(g, y)| g * y).collect();
                let gb: Vec<f64> = g.data().iter().zip(ad).map(|(g, x)| g * x).collect();
                acc(*a, Contrib::Owned(ga))?;
                acc(*b, Contrib::Owned(gb))?;
            }
            Op::Affine(a, k, _) => {
                acc(*a, Contrib::Dense(g.data(), *k))?;
            }
            Op::MatVec(m, x) => {
                let mat = self.value(*m);
                let xd = self.value(*x).data().to_vec();
                let cols = mat.cols();
                let gd = g.data();
                // dW_ij += g_i * x_j
                let mut gm = vec![0.0; mat.numel()];
                for (i, gi) in gd.iter().enumerate() {
                    let row = &mut gm[i * cols..(i + 1) * cols];
                    for (cell, xj) in row.iter_mut().zip(&xd) {
                        *cell = gi * xj;
                    }
                }
                acc(*m, Contrib::Owned(gm))?;
                // dx_j += sum_i g_i W_ij
                let md = self.value(*m).data();
                let mut gx = vec![0.0; cols];
                for (i, gi) in gd.iter().enumerate() {
                    let row = &md[i * cols..(i + 1) * cols];
                    for (slot, w) in gx.iter_mut().zip(row) {
                        *slot += gi * w;
                    }
                }
                acc(*x, Contrib::Owned(gx))?;
            }
            Op::Row(m, i) => {
                let cols = self.value(*m).cols();
                acc(*m, Contrib::Slice(g.data(), i * cols, 1.0))?;
            }
            Op::Concat(ids) => {
                let mut offset = 0;
                for &id in ids {
                    let n = self.value(id).numel();
                    acc(id, Contrib::Window(&g.data()[offset..offset + n]))?;
                    offset += n;
                }
            }
            Op::Pick(a, i) => {
                acc(*a, Contrib::Slice(g.data(), *i, 1.0))?;
            }
            Op::Sum(a) => {
                acc(*a, Contrib::Broadcast(g.data()[0]))?;
            }
            Op::Sigmoid(a) => {
                let s = node.value.data();
                let ga: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(s)
                    .map(|(g, s)| g * s * (1.0 - s))
                    .collect();
                acc(*a, Contrib::Owned(ga))?;
            }
            Op::Tanh(a) => {
                let t = node.value.data();
                let ga: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(t)
                    .map(|(g, t)| g * (1.0 - t * t))
                    .collect();
                acc(*a, Contrib::Owned(ga))?;
            }
            Op::Relu(a) => {
                let xd = self.value(*a).data();
                let ga: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(xd)
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                acc(*a, Contrib::Owned(ga))?;
            }
            Op::Exp(a) => {
                let xd = self.value(*a).data();
                let v = node.value.data();
                let ga: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(v.iter().zip(xd))
                    .map(|(g, (v, x))| if x.abs() < EXP_CLAMP { g * v } else { 0.0 })
                    .collect();
                acc(*a, Contrib::Owned(ga))?;
            }
            Op::Ln(a) => {
                let xd = self.value(*a).data();
                let ga: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(xd)
                    .map(|(g, x)| if *x > LOG_FLOOR { g / x } else { 0.0 })
                    .collect();
                acc(*a, Contrib::Owned(ga))?;
            }
            Op::Square(a) => {
                let xd = self.value(*a).data();
                let ga: Vec<f64> = g.data().iter().zip(xd).map(|(g, x)| 2.0 * g * x).collect();
                acc(*a, Contrib::Owned(ga))?;
            }
            Op::ClampMin(a, floor) => {
                let xd = self.value(*a).data();
                let ga: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(xd)
                    .map(|(g, x)| if *x > *floor { *g } else { 0.0 })
                    .collect();
                acc(*a, Contrib::Owned(ga))?;
            }
            Op::MaskedSoftmax(a, mask) => {
                let p = node.value.data();
                let gd = g.data();
                let dot: f64 = gd
                    .iter()
                    .zip(p)
                    .zip(mask)
                    .filter(|(_, &m)| m)
                    .map(|((g, p), _)| g * p)
                    .sum();
                let ga: Vec<f64> = gd
                    .iter()
                    .zip(p)
                    .zip(mask)
                    .map(|((g, p), &m)| if m { p * (g - dot) } else { 0.0 })
                    .collect();
                acc(*a, Contrib::Owned(ga))?;
            }
        }
        Ok(())
    }
}

/// How a child's gradient lands in a parent accumulator.
enum Contrib<'a> {
    /// slot += k * g, densely.
    Dense(&'a [f64], f64),
    /// slot += g (already-owned buffer matching the parent's shape).
    Owned(Vec<f64>),
    /// slot[offset..offset+len] += k * g.
    Slice(&'a [f64], usize, f64),
    /// A window of the child gradient lands densely on the whole parent.
    Window(&'a [f64]),
    /// Every element receives the same scalar.
    Broadcast(f64),
}

impl Contrib<'_> {
    fn apply(self, slot: &mut [f64]) {
        match self {
            Contrib::Dense(g, k) => {
                for (s, gi) in slot.iter_mut().zip(g) {
                    *s += k * gi;
                }
            }
            Contrib::Owned(g) => {
                for (s, gi) in slot.iter_mut().zip(&g) {
                    *s += gi;
                }
            }
            Contrib::Slice(g, offset, k) => {
                for (s, gi) in slot[offset..offset + g.len()].iter_mut().zip(g) {
                    *s += k * gi;
                }
            }
            Contrib::Window(g) => {
                for (s, gi) in slot.iter_mut().zip(g) {
                    *s += gi;
                }
            }
            Contrib::Broadcast(x) => {
                for s in slot.iter_mut() {
                    *s += x;
                }
            }
        }
    }
}

/// Weights of one GRU cell. Ids refer to tape leaves bound from a parameter
/// store; matrices are `[width, width]`, biases `[width]`.
#[derive(Debug, Clone, Copy)]
pub struct GruWeights {
    pub update_x: NodeId,
    pub update_h: NodeId,
    pub update_b: NodeId,
    pub reset_x: NodeId,
    pub reset_h: NodeId,
    pub reset_b: NodeId,
    pub cand_x: NodeId,
    pub cand_h: NodeId,
    pub cand_b: NodeId,
}

/// One GRU step: returns the next state given `input` and `state` of equal
/// width.
///
/// z = sigmoid(Wz x + Uz h + bz), r = sigmoid(Wr x + Ur h + br),
/// c = tanh(Wc x + Uc (r .* h) + bc), h' = (1 - z) .* h + z .* c
pub fn gru_cell(tape: &mut Tape, w: &GruWeights, input: NodeId, state: NodeId) -> Result<NodeId> {
    if !tape.value(input).same_shape(tape.value(state)) {
        return Err(AutodiffError::ShapeMismatch {
            op: "gru_cell",
            lhs: tape.value(input).shape().to_vec(),
            rhs: tape.value(state).shape().to_vec(),
        });
    }
    let zx = tape.matvec(w.update_x, input)?;
    let zh = tape.matvec(w.update_h, state)?;
    let z_pre = tape.add_n(&[zx, zh, w.update_b])?;
    let z = tape.sigmoid(z_pre);

    let rx = tape.matvec(w.reset_x, input)?;
    let rh = tape.matvec(w.reset_h, state)?;
    let r_pre = tape.add_n(&[rx, rh, w.reset_b])?;
    let r = tape.sigmoid(r_pre);

    let cx = tape.matvec(w.cand_x, input)?;
    let gated = tape.mul(r, state)?;
    let ch = tape.matvec(w.cand_h, gated)?;
    let c_pre = tape.add_n(&[cx, ch, w.cand_b])?;
    let c = tape.tanh(c_pre);

    let keep = tape.affine(z, -1.0, 1.0);
    let kept = tape.mul(keep, state)?;
    let new = tape.mul(z, c)?;
    tape.add(kept, new)
}
