//! The assembled network: local encoder, attention stack and classifier.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gmsa::{AttentionKind, AttentionLayer, ClassifierHead};
use crate::lgcl::LocalEncoder;
use crate::numerics::{uniform_init, Matrix, Mode, ParamId, ParamStore, Tape, Var};

/// Which of the three components are switched on.
///
/// Disabling the local component replaces the MLP encoder by a single linear
/// projection of the raw features and drops the contrastive term. Disabling
/// attention feeds the encoder output straight to the classifier. Disabling
/// mixup keeps the two-stage schedule but never augments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Components {
    pub lgcl: bool,
    pub gmsa: bool,
    pub pma: bool,
}

impl Default for Components {
    fn default() -> Self {
        Self {
            lgcl: true,
            gmsa: true,
            pma: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelShape {
    pub input_dim: usize,
    pub hidden: usize,
    pub heads: usize,
    pub layers: usize,
    pub classes: usize,
    pub lgcl: bool,
    pub gmsa: bool,
    pub attention: AttentionKind,
}

#[derive(Clone, Debug)]
pub enum InputStage {
    Encoder(LocalEncoder),
    /// Linear `D x H` map of the raw features, used when the local component is off.
    Projection(ParamId),
}

#[derive(Clone, Debug)]
pub struct ComGrlModel {
    pub store: ParamStore,
    pub input: InputStage,
    pub layers: Vec<AttentionLayer>,
    pub head: ClassifierHead,
    pub attention: AttentionKind,
}

/// Variables produced by one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ModelOutput {
    /// Encoder output `X'` (or the projected features without the encoder).
    pub embedding: Var,
    /// Final node representation fed to the classifier.
    pub representation: Var,
    /// Row-stochastic `N x k` class probabilities.
    pub probs: Var,
}

impl ComGrlModel {
    pub fn new(shape: &ModelShape, rng: &mut dyn RngCore) -> Result<Self> {
        let mut store = ParamStore::new();
        let input = if shape.lgcl {
            InputStage::Encoder(LocalEncoder::new(&mut store, shape.input_dim, shape.hidden, rng))
        } else {
            InputStage::Projection(store.add(
                "input.projection",
                uniform_init(shape.input_dim, shape.hidden, rng),
            ))
        };
        let layers = if shape.gmsa {
            (0..shape.layers)
                .map(|l| AttentionLayer::new(&mut store, l, shape.hidden, shape.heads, rng))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let head = ClassifierHead::new(&mut store, shape.hidden, shape.classes, rng);
        Ok(Self {
            store,
            input,
            layers,
            head,
            attention: shape.attention,
        })
    }

    pub fn forward(&self, tape: &mut Tape, features: &Matrix, mode: &mut Mode) -> Result<ModelOutput> {
        let x = tape.constant(features.clone());
        let embedding = match &self.input {
            InputStage::Encoder(enc) => enc.encode(tape, &self.store, x, mode)?,
            InputStage::Projection(w) => {
                let w = tape.param(&self.store, *w);
                let z = tape.matmul(x, w)?;
                mode.dropout(tape, z)?
            }
        };
        let mut z = embedding;
        for layer in &self.layers {
            z = layer.forward(tape, &self.store, z, self.attention)?;
        }
        let probs = self.head.classify(tape, &self.store, z)?;
        Ok(ModelOutput {
            embedding,
            representation: z,
            probs,
        })
    }

    /// Evaluation-mode class probabilities.
    pub fn predict(&self, features: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, features, &mut Mode::Eval)?;
        Ok(tape.value(out.probs).clone())
    }
}
