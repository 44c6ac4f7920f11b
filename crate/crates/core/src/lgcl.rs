//! Local graph contrastive learning: a two-layer MLP encoder whose embeddings
//! are pulled towards their multi-hop neighbours by a weighted contrastive loss.

use std::sync::Once;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ContrastCoefficients;
use crate::numerics::{uniform_init, Mode, ParamId, ParamStore, Tape, Var, LEAKY_SLOPE};

/// Floor applied before the logarithm in [`ContrastiveForm::Log`].
const LOG_FLOOR: f64 = 1e-300;

/// `X' = σ(σ(X W1) W2)` with a leaky rectifier `σ`; dropout follows each activation.
#[derive(Clone, Debug)]
pub struct LocalEncoder {
    pub w1: ParamId,
    pub w2: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LocalEncoder {
    pub fn new(store: &mut ParamStore, input_dim: usize, hidden: usize, rng: &mut dyn RngCore) -> Self {
        let w1 = store.add("encoder.w1", uniform_init(input_dim, hidden, rng));
        let w2 = store.add("encoder.w2", uniform_init(hidden, hidden, rng));
        Self {
            w1,
            w2,
            input_dim,
            hidden,
        }
    }

    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, x: Var, mode: &mut Mode) -> Result<Var> {
        let w1 = tape.param(store, self.w1);
        let w2 = tape.param(store, self.w2);
        let h = tape.matmul(x, w1)?;
        let h = tape.leaky_relu(h, LEAKY_SLOPE);
        let h = mode.dropout(tape, h)?;
        let h = tape.matmul(h, w2)?;
        let h = tape.leaky_relu(h, LEAKY_SLOPE);
        mode.dropout(tape, h)
    }
}

/// How each node's neighbour mass enters the loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastiveForm {
    /// `-(1/N) Σ_i Σ_j s_ij p_ij`, the weighted neighbour mass itself.
    #[default]
    Ratio,
    /// `-(1/N) Σ_i log Σ_j s_ij p_ij` over nodes with a nonempty neighbourhood.
    Log,
}

static ZERO_ROW_WARNING: Once = Once::new();

/// Neighbourhood-weighted contrastive loss on the embedding rows.
///
/// With `p_ij = softmax_k(cos(x_i, x_k) / τ)_j` (the softmax running over all
/// nodes, `k = i` included) the loss is `-(1/N) Σ_i Σ_j s_ij p_ij`, or the
/// log of each inner sum under [`ContrastiveForm::Log`]. Cosine similarity
/// with an all-zero embedding row is taken as 0.
pub fn contrastive_loss(
    tape: &mut Tape,
    embedding: Var,
    coeffs: &ContrastCoefficients,
    tau: f64,
    form: ContrastiveForm,
) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    let (n, _) = tape.shape(embedding);
    if coeffs.matrix.shape() != (n, n) {
        return Err(Error::shape("contrastive_loss", tape.shape(embedding), coeffs.matrix.shape()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("contrastive loss on an empty embedding".into()));
    }
    let emb = tape.value(embedding);
    if (0..n).any(|i| emb.row(i).iter().all(|&v| v == 0.0)) {
        ZERO_ROW_WARNING.call_once(|| {
            log::warn!("zero embedding row: its cosine similarities are taken as 0");
        });
    }

    let sim = tape.cosine_similarity(embedding, embedding)?;
    let logits = tape.scale(sim, 1.0 / tau);
    let p = tape.row_softmax(logits);
    let s = tape.constant(coeffs.matrix.clone());
    let weighted = tape.hadamard(p, s)?;
    let mass = tape.row_sum(weighted);
    let per_node = match form {
        ContrastiveForm::Ratio => mass,
        ContrastiveForm::Log => {
            let logged = tape.log_clamped(mass, LOG_FLOOR);
            let mask = crate::numerics::Matrix::from_fn(n, 1, |i, _| {
                if coeffs.matrix.row(i).iter().any(|&v| v > 0.0) {
                    1.0
                } else {
                    0.0
                }
            });
            let mask = tape.constant(mask);
            tape.hadamard(logged, mask)?
        }
    };
    let total = tape.sum(per_node);
    Ok(tape.scale(total, -1.0 / n as f64))
}
