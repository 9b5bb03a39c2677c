//! Embedding networks: layers, losses, optimizer, training and persistence.

pub mod augment;
mod fpmode;
pub mod gradcheck;
pub mod io;
pub mod loss;
pub mod model;
pub mod network;
pub mod optim;
pub mod train;

use std::fmt;
use std::str::FromStr;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use augment::{augment, AugmentConfig};
pub use io::{load_model, read_embeddings, read_model, save_model, write_embeddings, write_model, EmbeddingTable, ModelFile};
pub use loss::{ntxent, stack_views, triplet_batch, triplet_batch_loss, triplet_loss};
pub use model::{Architecture, Dense, Gradients, LayerSpec, ModelParams};
pub use network::{backward, forward, forward_trace, to_matrix, DropoutMasks, Head, Trace};
pub use optim::{adam_step, OptimizerState};
pub use train::{
    embed_all, report_learned_weights, train, train_with, write_training_log, EpochLog, FeatureWeight,
    TrainConfig, TrainOutcome, TrainingSet, DEFAULT_CUSTOM_WEIGHTS,
};

/// Scalar type a network can be computed in.
pub trait Real:
    Float
    + FromPrimitive
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + fmt::Debug
    + fmt::Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    const NAME: &'static str;
}

impl Real for f32 {
    const NAME: &'static str = "f32";
}

impl Real for f64 {
    const NAME: &'static str = "f64";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Standard,
    LearnableWeights,
    CustomWeights,
    #[serde(rename = "simclr")]
    SimClr,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Standard,
        Variant::LearnableWeights,
        Variant::CustomWeights,
        Variant::SimClr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::LearnableWeights => "learnable_weights",
            Variant::CustomWeights => "custom_weights",
            Variant::SimClr => "simclr",
        }
    }

    /// Display name used in result tables.
    pub fn title(self) -> &'static str {
        match self {
            Variant::Standard => "Triplet",
            Variant::LearnableWeights => "Triplet + learnable weights",
            Variant::CustomWeights => "Triplet + custom weights",
            Variant::SimClr => "SimCLR",
        }
    }

    pub fn has_input_weights(self) -> bool {
        matches!(self, Variant::LearnableWeights | Variant::CustomWeights)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(Variant::Standard),
            "learnable" | "learnable_weights" => Ok(Variant::LearnableWeights),
            "custom" | "custom_weights" => Ok(Variant::CustomWeights),
            "simclr" => Ok(Variant::SimClr),
            other => Err(NnError::Config(format!(
                "unknown variant `{other}` (expected standard, learnable, custom or simclr)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    None,
}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("custom-weights variant needs a 9-element custom_weights vector")]
    MissingCustomWeights,
    #[error("row {0} has zero norm; cosine similarity undefined")]
    ZeroNorm(usize),
    #[error("no training examples in the train split")]
    EmptyTraining,
    #[error("model has no input weights")]
    NoInputWeights,
    #[error("invalid data: {0}")]
    Data(String),
    #[error("invalid model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.as_str()));
        }
        assert_eq!("learnable".parse::<Variant>().unwrap(), Variant::LearnableWeights);
        assert!("triplet".parse::<Variant>().is_err());
    }
}
