//! Node classification with local contrastive learning, linear-cost global
//! attention and pseudo-label-assisted mixup.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: dense matrices, a reverse-mode tape and Adam
//! * [`graph`]: the graph type, normalised adjacency powers and hop neighbourhoods
//! * [`lgcl`]: the MLP encoder and the neighbourhood contrastive loss
//! * [`gmsa`]: multi-head attention layers, classifier head and cross-entropy
//! * [`pma`]: candidate sampling and feature/structure mixup
//! * [`model`] and [`trainer`]: the assembled network and its two-stage loop
//! * [`data`]: dataset files, the block-model generator and noise injection

pub mod data;
pub mod error;
pub mod gmsa;
pub mod graph;
pub mod lgcl;
pub mod model;
pub mod numerics;
pub mod pma;
pub mod trainer;

pub use data::{generate_sbm, load_dataset, write_dataset, GraphNoiseMode, SbmSpec};
pub use error::{Error, Result};
pub use gmsa::AttentionKind;
pub use graph::{Graph, Split};
pub use lgcl::ContrastiveForm;
pub use model::{ComGrlModel, Components};
pub use numerics::Matrix;
pub use pma::{LambdaPolicy, PseudoLabels};
pub use trainer::{train, ExperimentReport, NoiseSettings, TrainConfig, TrainOutcome, Variant};
