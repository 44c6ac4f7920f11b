//! Global multi-head self-attention over node embeddings, the classifier head
//! and the supervised loss.
//!
//! The default attention is the factorised form
//! `softmax_row(Q) · (softmax_col(K)ᵀ · V)`, which never materialises an
//! `N x N` matrix: the `d x d` context is built once and every query mixes its
//! rows, so cost is linear in `N`. The quadratic `softmax(QKᵀ/√d) V` form is
//! kept as [`AttentionKind::Standard`] for comparison.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{uniform_init, Matrix, ParamId, ParamStore, Tape, Var};

/// Floor on class probabilities inside the cross-entropy log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionKind {
    #[default]
    Efficient,
    Standard,
}

/// Query/key/value projections of one head, each `H x d_head`.
#[derive(Clone, Debug)]
pub struct HeadParams {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
}

/// One attention block: multi-head attention, output mix, residual, then a
/// layer-normalised feed-forward branch with its own residual.
#[derive(Clone, Debug)]
pub struct AttentionLayer {
    pub heads: Vec<HeadParams>,
    pub w_out: ParamId,
    pub ln_gamma: ParamId,
    pub ln_beta: ParamId,
    pub w_ff_in: ParamId,
    pub w_ff_out: ParamId,
    pub width: usize,
    pub head_dim: usize,
}

impl AttentionLayer {
    pub fn new(
        store: &mut ParamStore,
        index: usize,
        width: usize,
        num_heads: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        if num_heads == 0 || !width.is_multiple_of(num_heads) {
            return Err(Error::InvalidArgument(format!(
                "width {width} is not divisible into {num_heads} heads"
            )));
        }
        let head_dim = width / num_heads;
        let heads = (0..num_heads)
            .map(|h| HeadParams {
                wq: store.add(format!("attn{index}.head{h}.wq"), uniform_init(width, head_dim, rng)),
                wk: store.add(format!("attn{index}.head{h}.wk"), uniform_init(width, head_dim, rng)),
                wv: store.add(format!("attn{index}.head{h}.wv"), uniform_init(width, head_dim, rng)),
            })
            .collect();
        Ok(Self {
            heads,
            w_out: store.add(format!("attn{index}.w_out"), uniform_init(width, width, rng)),
            ln_gamma: store.add(format!("attn{index}.ln_gamma"), Matrix::filled(1, width, 1.0)),
            ln_beta: store.add(format!("attn{index}.ln_beta"), Matrix::zeros(1, width)),
            w_ff_in: store.add(format!("attn{index}.w_ff_in"), uniform_init(width, width, rng)),
            w_ff_out: store.add(format!("attn{index}.w_ff_out"), uniform_init(width, width, rng)),
            width,
            head_dim,
        })
    }

    /// `Z_att = Concat(head_1..head_h) W_out + Z`, then
    /// `Z_out = relu(LN(Z_att) W_ff_in) W_ff_out + Z_att`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, z: Var, kind: AttentionKind) -> Result<Var> {
        let (_, d) = tape.shape(z);
        if d != self.width {
            return Err(Error::shape("attention_layer", tape.shape(z), (d, self.width)));
        }
        let mut outs = Vec::with_capacity(self.heads.len());
        for h in &self.heads {
            let wq = tape.param(store, h.wq);
            let wk = tape.param(store, h.wk);
            let wv = tape.param(store, h.wv);
            outs.push(match kind {
                AttentionKind::Efficient => efficient_attention(tape, z, wq, wk, wv)?,
                AttentionKind::Standard => standard_attention(tape, z, wq, wk, wv)?,
            });
        }
        let cat = tape.hconcat(&outs)?;
        let w_out = tape.param(store, self.w_out);
        let mixed = tape.matmul(cat, w_out)?;
        let attended = tape.add(mixed, z)?;
        feed_forward_block(tape, store, self, attended)
    }
}

fn feed_forward_block(tape: &mut Tape, store: &ParamStore, layer: &AttentionLayer, z: Var) -> Result<Var> {
    let g = tape.param(store, layer.ln_gamma);
    let b = tape.param(store, layer.ln_beta);
    let w_in = tape.param(store, layer.w_ff_in);
    let w_out = tape.param(store, layer.w_ff_out);
    let normed = tape.layer_norm(z, g, b)?;
    let inner = tape.matmul(normed, w_in)?;
    let inner = tape.relu(inner);
    let ff = tape.matmul(inner, w_out)?;
    tape.add(ff, z)
}

/// `softmax_row(Z Wq) · (softmax_col(Z Wk)ᵀ · Z Wv)`: queries are normalised
/// over features, keys over nodes.
pub fn efficient_attention(tape: &mut Tape, z: Var, wq: Var, wk: Var, wv: Var) -> Result<Var> {
    let q = tape.matmul(z, wq)?;
    let k = tape.matmul(z, wk)?;
    let v = tape.matmul(z, wv)?;
    let q = tape.row_softmax(q);
    let k = tape.col_softmax(k);
    let kt = tape.transpose(k);
    let context = tape.matmul(kt, v)?;
    tape.matmul(q, context)
}

/// `softmax_row(Q Kᵀ / √d) V` with `d` the head width.
pub fn standard_attention(tape: &mut Tape, z: Var, wq: Var, wk: Var, wv: Var) -> Result<Var> {
    let q = tape.matmul(z, wq)?;
    let k = tape.matmul(z, wk)?;
    let v = tape.matmul(z, wv)?;
    let d = tape.shape(q).1.max(1) as f64;
    let kt = tape.transpose(k);
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, 1.0 / d.sqrt());
    let weights = tape.row_softmax(scores);
    tape.matmul(weights, v)
}

/// Linear map to class logits followed by a row softmax.
#[derive(Clone, Debug)]
pub struct ClassifierHead {
    pub weight: ParamId,
    pub num_classes: usize,
}

impl ClassifierHead {
    pub fn new(store: &mut ParamStore, width: usize, num_classes: usize, rng: &mut dyn RngCore) -> Self {
        Self {
            weight: store.add("classifier.w", uniform_init(width, num_classes, rng)),
            num_classes,
        }
    }

    pub fn classify(&self, tape: &mut Tape, store: &ParamStore, z: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let logits = tape.matmul(z, w)?;
        Ok(tape.row_softmax(logits))
    }
}

/// One-hot targets for the given nodes, zero rows elsewhere.
pub fn target_matrix(n: usize, k: usize, nodes: &[usize], labels: &[usize]) -> Result<Matrix> {
    if nodes.len() != labels.len() {
        return Err(Error::InvalidArgument("one label per node expected".into()));
    }
    let mut y = Matrix::zeros(n, k);
    for (&i, &c) in nodes.iter().zip(labels) {
        if i >= n || c >= k {
            return Err(Error::InvalidArgument(format!("target ({i}, {c}) outside {n}x{k}")));
        }
        y.set(i, c, 1.0);
    }
    Ok(y)
}

/// `-Σ_i Σ_c y_ic log max(z_ic, 1e-12)` summed (not averaged) over the
/// labelled nodes in `targets`.
pub fn cross_entropy_loss(tape: &mut Tape, probs: Var, targets: &Matrix) -> Result<Var> {
    if tape.shape(probs) != targets.shape() {
        return Err(Error::shape("cross_entropy", tape.shape(probs), targets.shape()));
    }
    if targets.as_slice().iter().all(|&v| v == 0.0) {
        return Err(Error::EmptySplit("train"));
    }
    let logp = tape.log_clamped(probs, PROB_FLOOR);
    let y = tape.constant(targets.clone());
    let picked = tape.hadamard(logp, y)?;
    let s = tape.sum(picked);
    Ok(tape.scale(s, -1.0))
}
