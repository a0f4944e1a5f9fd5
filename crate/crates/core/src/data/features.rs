//! Lagged-feature extraction.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{CalendarFilter, DataError, TimeSeries, STEP_MINUTES};
use crate::nn::Sample;

/// Minute offsets of the lagged readings fed to the forecaster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LagSpec {
    lags: Vec<u32>,
}

impl Default for LagSpec {
    fn default() -> Self {
        Self {
            lags: vec![15, 30, 60, 90, 120, 1440],
        }
    }
}

impl LagSpec {
    pub fn new(lags: Vec<u32>) -> Result<Self, DataError> {
        let spec = Self { lags };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.lags.is_empty() {
            return Err(DataError::InvalidLags("at least one lag is required".into()));
        }
        for &l in &self.lags {
            if l == 0 || l % STEP_MINUTES as u32 != 0 {
                return Err(DataError::InvalidLags(format!(
                    "lag {l} is not a positive multiple of {STEP_MINUTES} minutes"
                )));
            }
        }
        if self.lags.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DataError::InvalidLags("lags must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn minutes(&self) -> &[u32] {
        &self.lags
    }

    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    /// Lags in grid steps.
    pub fn steps(&self) -> Vec<usize> {
        self.lags
            .iter()
            .map(|&l| (l / STEP_MINUTES as u32) as usize)
            .collect()
    }

    pub fn max_steps(&self) -> usize {
        self.steps().into_iter().max().unwrap_or(0)
    }
}

/// Where a dataset's samples came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub source_start: NaiveDateTime,
    pub source_end: NaiveDateTime,
    pub lags: LagSpec,
    pub filter: Option<CalendarFilter>,
    /// Set when some reading is negative (net load with local generation).
    pub signed: bool,
}

/// Samples extracted from one node's series.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub node_id: String,
    pub samples: Vec<Sample>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One sample per grid point whose target and every lagged input are present.
///
/// Features are ordered like `lags`: `[P(T - lag_0), P(T - lag_1), ...]`.
pub fn extract_samples(series: &TimeSeries, lags: &LagSpec) -> Result<Dataset, DataError> {
    lags.validate()?;
    let steps = lags.steps();
    let max = lags.max_steps();
    let mut samples = Vec::new();
    let mut signed = false;
    for i in max..series.len() {
        let Some(target) = series.value(i) else {
            continue;
        };
        let features: Option<Vec<f64>> = steps.iter().map(|&s| series.value(i - s)).collect();
        let Some(features) = features else {
            continue;
        };
        signed |= target < 0.0 || features.iter().any(|&f| f < 0.0);
        samples.push(Sample {
            features,
            target,
            timestamp: series.timestamp(i),
        });
    }
    if samples.is_empty() {
        return Err(DataError::EmptyDataset {
            node: series.node_id().to_string(),
        });
    }
    Ok(Dataset {
        node_id: series.node_id().to_string(),
        samples,
        provenance: Provenance {
            source_start: series.start(),
            source_end: series.end(),
            lags: lags.clone(),
            filter: series.applied_filter().cloned(),
            signed,
        },
    })
}
