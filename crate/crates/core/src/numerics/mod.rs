//! Dense tensors, reverse-mode differentiation and the optimiser.

use rand::{Rng, RngCore};

mod adam;
mod matrix;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use matrix::{gemm, Matrix, Op};
pub use tape::{ParamId, ParamStore, Tape, Tensor, Var, LAYER_NORM_EPS};

/// Negative slope of every leaky rectifier in the model.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Uniform initialisation in `[-1/sqrt(rows), 1/sqrt(rows)]`, `rows` being the fan-in.
pub fn uniform_init(rows: usize, cols: usize, rng: &mut dyn RngCore) -> Matrix {
    let bound = 1.0 / (rows.max(1) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

/// Whether a forward pass is for training (dropout active) or evaluation.
pub enum Mode<'a> {
    Train {
        dropout: f64,
        rng: &'a mut dyn RngCore,
    },
    Eval,
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train { .. })
    }

    /// Dropout in training mode, identity in evaluation mode.
    pub fn dropout(&mut self, tape: &mut Tape, x: Var) -> crate::Result<Var> {
        match self {
            Mode::Train { dropout, rng } => tape.dropout(x, *dropout, &mut **rng),
            Mode::Eval => Ok(x),
        }
    }
}
