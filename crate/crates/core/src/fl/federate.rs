use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{FlError, GradientReport, WeightBroadcast};
use crate::data::{Dataset, SAMPLES_PER_DAY};
use crate::nn::{loss_and_step, ModelWeights, Sample};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FederateKind {
    HomeEnergyManager,
    EdgeResource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FederateId {
    pub index: usize,
    pub kind: FederateKind,
}

impl FederateId {
    pub fn home(index: usize) -> Self {
        Self {
            index,
            kind: FederateKind::HomeEnergyManager,
        }
    }

    pub fn edge(index: usize) -> Self {
        Self {
            index,
            kind: FederateKind::EdgeResource,
        }
    }
}

/// Divides every input feature by one local constant.
///
/// Fitted on a federate's own training features and never transmitted.
/// Targets are left in kW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    scale: f64,
}

impl Default for FeatureScaling {
    fn default() -> Self {
        Self::identity()
    }
}

impl FeatureScaling {
    pub fn identity() -> Self {
        Self { scale: 1.0 }
    }

    /// Population std of all feature values pooled together.
    ///
    /// Falls back to identity when the data has no spread.
    pub fn fit(samples: &[Sample]) -> Self {
        let n: usize = samples.iter().map(|s| s.features.len()).sum();
        if n == 0 {
            return Self::identity();
        }
        let mean = samples.iter().flat_map(|s| &s.features).sum::<f64>() / n as f64;
        let var = samples
            .iter()
            .flat_map(|s| &s.features)
            .map(|x| (x - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let sd = var.sqrt();
        if sd > 0.0 && sd.is_finite() {
            Self { scale: sd }
        } else {
            Self::identity()
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v / self.scale).collect()
    }

    pub fn sample(&self, s: &Sample) -> Sample {
        Sample {
            features: self.features(&s.features),
            target: s.target,
            timestamp: s.timestamp,
        }
    }
}

/// One IoT participant. Its samples stay inside this struct.
#[derive(Debug, Clone)]
pub struct Federate {
    id: FederateId,
    samples: Vec<Sample>,
    days: Vec<Range<usize>>,
    scaling: FeatureScaling,
    weights: Option<ModelWeights>,
    seed: u64,
    next_round: u64,
}

impl Federate {
    /// Scales the dataset with a locally fitted [`FeatureScaling`].
    pub fn new(id: FederateId, dataset: &Dataset, seed: u64) -> Result<Self, FlError> {
        let scaling = FeatureScaling::fit(&dataset.samples);
        Self::with_scaling(id, dataset, scaling, seed)
    }

    pub fn with_scaling(
        id: FederateId,
        dataset: &Dataset,
        scaling: FeatureScaling,
        seed: u64,
    ) -> Result<Self, FlError> {
        let samples: Vec<Sample> = dataset.samples.iter().map(|s| scaling.sample(s)).collect();
        let days = full_days(&samples);
        if days.is_empty() {
            return Err(FlError::NoFullDay { federate: id.index });
        }
        Ok(Self {
            id,
            samples,
            days,
            scaling,
            weights: None,
            seed,
            next_round: 0,
        })
    }

    pub fn id(&self) -> FederateId {
        self.id
    }

    pub fn scaling(&self) -> FeatureScaling {
        self.scaling
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn expected_round(&self) -> u64 {
        self.next_round
    }

    /// Number of complete days available for mini-batches.
    pub fn day_count(&self) -> usize {
        self.days.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.samples[0].features.len()
    }

    /// Weights received with the last broadcast.
    pub fn current_weights(&self) -> Option<&ModelWeights> {
        self.weights.as_ref()
    }

    /// Index into the full-day pool drawn for `round`.
    pub fn planned_day(&self, round: u64) -> usize {
        stream_rng(self.seed, round).random_range(0..self.days.len())
    }

    /// The scaled samples used as the mini-batch in `round`.
    pub fn mini_batch(&self, round: u64) -> &[Sample] {
        &self.samples[self.days[self.planned_day(round)].clone()]
    }
}

/// Runs of consecutive samples sharing a calendar date, kept only when the
/// day is complete.
fn full_days(samples: &[Sample]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=samples.len() {
        if i == samples.len() || samples[i].timestamp.date() != samples[start].timestamp.date() {
            if i - start == SAMPLES_PER_DAY {
                out.push(start..i);
            }
            start = i;
        }
    }
    out
}

/// One LocalTraining step: adopt the broadcast weights, draw a day, report
/// `-eta * grad` and the mini-batch loss at the broadcast weights.
pub fn local_round(
    f: &mut Federate,
    b: &WeightBroadcast,
    learning_rate: f64,
) -> Result<GradientReport, FlError> {
    if b.round != f.next_round {
        return Err(FlError::Desync {
            federate: Some(f.id.index),
            expected: f.next_round,
            found: b.round,
        });
    }
    let in_dim = b.weights.spec().input_dim;
    if in_dim != f.feature_dim() {
        return Err(FlError::FeatureMismatch {
            federate: f.id.index,
            model: in_dim,
            data: f.feature_dim(),
        });
    }
    f.weights = Some(b.weights.clone());
    let (loss, step) = loss_and_step(&b.weights, f.mini_batch(b.round), learning_rate)?;
    f.next_round += 1;
    Ok(GradientReport {
        round: b.round,
        federate: f.id,
        step,
        loss,
    })
}
