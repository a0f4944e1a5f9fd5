//! Barrier-synchronous federated training with a parameter server.
//!
//! Each round the server broadcasts the global weights, every federate
//! returns `-eta * grad` on one random day of its private data, and the
//! server adds the coefficient-weighted sum of those steps to the weights.
//! Only [`WeightBroadcast`] and [`GradientReport`] ever cross the boundary
//! between server and federate.

pub mod codec;
mod federate;
mod server;

use thiserror::Error;

pub use codec::{
    decode_message, decode_weights, encode_message, encode_weights, payload_len, CodecError, Message,
};
pub use federate::{local_round, FeatureScaling, Federate, FederateId, FederateKind};
pub use server::{
    aggregate, train, train_observed, AggregationWeights, GlobalModel, RoundRecord, StopReason,
    TrainingLog,
};

use crate::nn::{GradientStep, ModelWeights, NnError};

#[derive(Debug, Clone, PartialEq)]
pub struct WeightBroadcast {
    pub round: u64,
    pub weights: ModelWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub round: u64,
    pub federate: FederateId,
    pub step: GradientStep,
    /// Mini-batch loss at the broadcast weights.
    pub loss: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum FlError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("federate {federate} has no complete day of training data")]
    NoFullDay { federate: usize },
    #[error("no federates")]
    EmptyFederation,
    #[error("protocol desync (federate {federate:?}): expected round {expected}, got {found}")]
    Desync {
        federate: Option<usize>,
        expected: u64,
        found: u64,
    },
    #[error("round {round} incomplete: no report from federates {missing:?}")]
    IncompleteRound { round: u64, missing: Vec<usize> },
    #[error("round {round}: duplicate report from federate {federate}")]
    DuplicateReport { round: u64, federate: usize },
    #[error("report from unknown federate {index}")]
    UnknownFederate { index: usize },
    #[error("federate {federate}: model expects {model} features, data has {data}")]
    FeatureMismatch {
        federate: usize,
        model: usize,
        data: usize,
    },
    #[error("invalid aggregation weights: {0}")]
    InvalidAggregation(String),
    #[error("training diverged in round {round} (federate {federate:?})")]
    Divergence { round: u64, federate: Option<usize> },
}
