//! Experiment description: one JSON document drives every pipeline stage.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{
    CalendarFilter, CsvSchema, LagSpec, Perturbation, ProfileParams, SplitSpec, SAMPLES_PER_DAY,
};
use crate::fl::AggregationWeights;
use crate::grid::{Quantity, ShavingPolicy, SwingMode};
use crate::nn::{Hyperparams, LayerSpec};
use crate::rng::derive_seed;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Topology {
    pub num_nodes: usize,
    /// How many of the federates are edge resources; the rest are home
    /// energy managers. Purely a label.
    pub edge_resources: usize,
    pub days: usize,
    pub perturbation: Perturbation,
    pub profile: ProfileParams,
}

impl Default for Topology {
    fn default() -> Self {
        Self {
            num_nodes: 1000,
            edge_resources: 0,
            days: 61,
            perturbation: Perturbation::default(),
            profile: ProfileParams::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    #[default]
    Uniform,
    /// One coefficient per federate, in federate order.
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Training {
    pub hyperparams: Hyperparams,
    pub aggregation: AggregationMode,
    /// First day of the test month.
    pub split_boundary: NaiveDate,
    pub carry_over_days: u32,
}

impl Default for Training {
    fn default() -> Self {
        Self {
            hyperparams: Hyperparams::default(),
            aggregation: AggregationMode::Uniform,
            split_boundary: NaiveDate::from_ymd_opt(2021, 7, 1).expect("valid date"),
            carry_over_days: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdScope {
    /// The 24 hours before the split boundary, per node.
    LastTrainingDay,
    /// Everything before the split boundary, per node.
    TrainingPeriod,
    /// Every reading of every node.
    AllData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwingConfig {
    pub percentile: f64,
    pub quantity: Quantity,
    pub scope: ThresholdScope,
    pub mode: SwingMode,
}

impl Default for SwingConfig {
    fn default() -> Self {
        Self {
            percentile: 90.0,
            quantity: Quantity::DeltaP,
            scope: ThresholdScope::LastTrainingDay,
            mode: SwingMode::Signed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShavingConfig {
    pub percentile: f64,
    pub quantity: Quantity,
    pub scope: ThresholdScope,
    pub policy: ShavingPolicy,
}

impl Default for ShavingConfig {
    fn default() -> Self {
        Self {
            percentile: 90.0,
            quantity: Quantity::AbsolutePower,
            scope: ThresholdScope::AllData,
            policy: ShavingPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    /// Days forecast from the split boundary; `None` means the whole test month.
    pub horizon_days: Option<u32>,
    /// Trailing training days forecast as an in-sample check.
    pub in_sample_days: u32,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            horizon_days: None,
            in_sample_days: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Load data to train on. Defaults to the generated `feeder.csv`.
    pub data: Option<PathBuf>,
    pub schema: CsvSchema,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub topology: Topology,
    pub model: LayerSpec,
    pub training: Training,
    pub lags: LagSpec,
    pub calendar: CalendarFilter,
    pub swing: SwingConfig,
    pub shaving: ShavingConfig,
    pub forecast: ForecastConfig,
    pub paths: Paths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            topology: Topology::default(),
            model: LayerSpec::default(),
            training: Training::default(),
            lags: LagSpec::default(),
            calendar: CalendarFilter::default(),
            swing: SwingConfig::default(),
            shaving: ShavingConfig::default(),
            forecast: ForecastConfig::default(),
            paths: Paths::default(),
        }
    }
}

/// Independent seed streams derived from the experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStream {
    Profile,
    Feeder,
    Init,
    Federates,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        let t = &self.topology;
        if t.num_nodes == 0 || t.days == 0 {
            return Err(ConfigError::Invalid("num_nodes and days must be >= 1".into()));
        }
        if t.edge_resources > t.num_nodes {
            return Err(ConfigError::Invalid(format!(
                "{} edge resources among {} nodes",
                t.edge_resources, t.num_nodes
            )));
        }
        t.perturbation.validate().map_err(|e| invalid(&e))?;
        self.model.validate().map_err(|e| invalid(&e))?;
        self.training.hyperparams.validate().map_err(|e| invalid(&e))?;
        if self.training.hyperparams.mini_batch_size != SAMPLES_PER_DAY {
            return Err(ConfigError::Invalid(format!(
                "mini_batch_size must be {SAMPLES_PER_DAY} (one day of readings), got {}",
                self.training.hyperparams.mini_batch_size
            )));
        }
        self.lags.validate().map_err(|e| invalid(&e))?;
        if self.model.input_dim != self.lags.len() {
            return Err(ConfigError::Invalid(format!(
                "model input_dim {} does not match {} lags",
                self.model.input_dim,
                self.lags.len()
            )));
        }
        SplitSpec::new(self.training.split_boundary).map_err(|e| invalid(&e))?;
        if let AggregationMode::Custom(a) = &self.training.aggregation {
            AggregationWeights::new(a.clone()).map_err(|e| invalid(&e))?;
        }
        for p in [self.swing.percentile, self.shaving.percentile] {
            if !(p > 0.0 && p <= 100.0) {
                return Err(ConfigError::Invalid(format!("percentile {p} outside (0, 100]")));
            }
        }
        Ok(())
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec {
            boundary: self.training.split_boundary,
            carry_over_days: self.training.carry_over_days,
        }
    }

    pub fn aggregation(&self, federates: usize) -> Result<AggregationWeights, ConfigError> {
        match &self.training.aggregation {
            AggregationMode::Uniform => Ok(AggregationWeights::uniform(federates)),
            AggregationMode::Custom(a) if a.len() == federates => {
                AggregationWeights::new(a.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))
            }
            AggregationMode::Custom(a) => Err(ConfigError::Invalid(format!(
                "{} aggregation coefficients for {federates} federates",
                a.len()
            ))),
        }
    }

    pub fn seed_for(&self, stream: SeedStream) -> u64 {
        derive_seed(self.seed, stream as u64)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}
