//! The load forecaster: a fully-connected network trained with plain SGD.
//!
//! Everything here is a pure function over immutable values. Hidden layers
//! use a configurable [`Activation`]; the output layer is linear and scalar.

mod activation;
mod model;
mod ops;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use activation::Activation;
pub use model::{apply_step, init_weights, DenseLayer, GradientStep, LayerSpec, ModelWeights};
pub use ops::{
    batch_loss, forward, gradient_step, loss_and_gradient, loss_and_step, numerical_gradient,
};

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
}

/// One training or evaluation example: lagged readings and the reading at `timestamp`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub target: f64,
    pub timestamp: NaiveDateTime,
}

/// SGD settings. Defaults: `eta = 0.001`, one day (96 samples) per
/// mini-batch, at most 150 rounds, stopping tolerance `0.001`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub mini_batch_size: usize,
    pub max_epochs: usize,
    /// Written as the string `"inf"` when infinite.
    #[serde(with = "tolerance_repr")]
    pub tolerance: f64,
}

mod tolerance_repr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *x == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*x)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "+inf") => Ok(f64::INFINITY),
            Repr::Text(t) => Err(de::Error::custom(format!("invalid tolerance {t:?}"))),
        }
    }
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            mini_batch_size: 96,
            max_epochs: 150,
            tolerance: 0.001,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidParameter(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.mini_batch_size == 0 {
            return Err(NnError::InvalidParameter("mini_batch_size must be >= 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(NnError::InvalidParameter("max_epochs must be >= 1".into()));
        }
        // +inf is allowed: it stops after the first round.
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(NnError::InvalidParameter(format!(
                "tolerance must be >= 0, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}
