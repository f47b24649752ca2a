//! Cyclic contrastive training of the composed-retrieval model.
//!
//! The forward loss is an in-batch softmax cross-entropy over scaled cosine
//! similarities between composed features `ψ_i = f_M(u_i, f_T(t_i))` and
//! target features `v_j`. The cycle loss applies the same form to
//! `ψ̂_i = f_M(ψ_i, f_T(r_i))` against the reference features `u_j`, where
//! `r_i` describes the reverse transition. Both terms are blended by `ω`.

mod adam;
mod checkpoint;
mod loss;
mod sampler;
mod trainer;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use loss::{gradients, loss_bbc, loss_cycle, loss_total, pairwise_sum, BatchRow, Gradients, LossOutput, TrainBatch};
pub use sampler::{sample_description, sample_description_indices};
pub use trainer::{train, TrainOutcome};


use crate::data::VariantKind;
use crate::features::{FeatureError, MergerKind, MergerParams, TextEncoderParams, DEFAULT_RAW_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Updates the text projection and bias.
    TextEncoder,
    /// Freezes the encoders and updates the combiner.
    Merger,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::TextEncoder => "text",
            Phase::Merger => "merger",
        })
    }
}

impl FromStr for Phase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" | "text_encoder" => Ok(Phase::TextEncoder),
            "merger" => Ok(Phase::Merger),
            other => Err(format!("unknown phase `{other}` (expected text|merger)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub omega: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub phase: Phase,
    pub variants: Vec<VariantKind>,
    pub cyclic_enabled: bool,
    pub merger: MergerKind,
    pub raw_dim: usize,
    /// Text phase only: whether the encoder bias is updated.
    #[serde(default = "default_true")]
    pub train_bias: bool,
}

fn default_true() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 100.0,
            omega: 0.5,
            batch_size: 128,
            epochs: 50,
            learning_rate: 2e-6,
            seed: 0,
            phase: Phase::TextEncoder,
            variants: VariantKind::ALL.to_vec(),
            cyclic_enabled: true,
            merger: MergerKind::Sum,
            raw_dim: DEFAULT_RAW_DIM,
            train_bias: true,
        }
    }
}

impl TrainConfig {
    /// Second phase: combiner only, 100 epochs, batch 512, lr 2e-5.
    pub fn merger_phase() -> Self {
        TrainConfig {
            batch_size: 512,
            epochs: 100,
            learning_rate: 2e-5,
            phase: Phase::Merger,
            merger: MergerKind::Combiner,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: String| Err(TrainError::Config(m));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return fail(format!("omega must lie in [0, 1], got {}", self.omega));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.variants.is_empty() {
            return fail("at least one variant must be enabled".into());
        }
        if self.raw_dim == 0 {
            return fail("raw_dim must be positive".into());
        }
        if self.phase == Phase::Merger && self.merger != MergerKind::Combiner {
            return fail("the merger phase needs the combiner merger".into());
        }
        Ok(())
    }

    /// Weights of the forward and cycle terms.
    pub(crate) fn loss_weights(&self) -> (f64, f64) {
        if self.cyclic_enabled {
            (self.omega, 1.0 - self.omega)
        } else {
            (1.0, 0.0)
        }
    }
}

/// Everything a trained model needs at inference time.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub text: TextEncoderParams,
    pub merger: MergerParams,
}

impl Params {
    pub fn dim(&self) -> usize {
        self.text.dim()
    }

    /// `f_M(reference, f_T(text))`
    pub fn compose(&self, reference: ArrayView1<'_, f64>, text: &str) -> Result<Array1<f64>, FeatureError> {
        let t = self.text.encode(text);
        crate::features::merge(reference, t.view(), &self.merger)
    }

    pub fn is_finite(&self) -> bool {
        self.text.is_finite() && self.merger.is_finite()
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite value: {0}")]
    Numerical(String),
    #[error("row {0} has no reverse description")]
    MissingReverse(usize),
    #[error("record {pair_id} lacks descriptions for {variant}")]
    IncompleteRecord { pair_id: String, variant: VariantKind },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("{path}: {message}")]
    Checkpoint { path: std::path::PathBuf, message: String },
}
