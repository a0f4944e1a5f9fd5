//! Grid services driven by forecasts: swing thresholds, swing detection,
//! peak-shaving curtailment and the before/after swing accounting.

mod shaving;
mod swing;
mod threshold;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use shaving::{peak_shave, CurtailmentCommand, ShavingMode, ShavingOutcome, ShavingPolicy};
pub use swing::{
    detect_swings, detect_swings_with, predict_swings, predict_swings_with, swing_histogram,
    swing_reduction_report, DayReduction, SwingMode,
};
pub use threshold::{compute_threshold, nearest_rank, Quantity, ThresholdPolicy, ThresholdWindow};

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("no readings in the threshold window")]
    EmptyWindow,
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("forecast covers {available_minutes} min, curtailment needs {required_minutes} min")]
    InsufficientHorizon {
        available_minutes: i64,
        required_minutes: i64,
    },
    #[error("series are not aligned: {0}")]
    Misaligned(String),
    #[error("days must be >= 1")]
    ZeroDays,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventSource {
    Actual,
    Predicted,
}

/// A step-to-step change that exceeded the swing threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwingEvent {
    pub node_id: String,
    pub timestamp: NaiveDateTime,
    /// `P(T) - P(T - 15 min)` in kW.
    pub delta_p: f64,
    pub source: EventSource,
}

impl SwingEvent {
    pub fn date(&self) -> NaiveDate {
        self.timestamp.date()
    }
}
