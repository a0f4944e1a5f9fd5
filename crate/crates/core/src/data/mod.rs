//! Everything that produces samples: the synthetic feeder, CSV ingestion,
//! calendar filtering, lag extraction and the monthly train/test split.

mod calendar;
mod csv_io;
mod features;
mod profile;
pub(crate) mod series;
mod split;

use chrono::{NaiveDate, NaiveDateTime};
use thiserror::Error;

pub use calendar::{filter_days, CalendarFilter};
pub use csv_io::{
    export_csv, ingest_csv, ingest_reader, parse_timestamp, write_series_csv, CsvSchema,
    IngestError, IngestReport, Reject, TIMESTAMP_FORMAT,
};
pub use features::{extract_samples, Dataset, LagSpec, Provenance};
pub use profile::{
    base_profile, default_base_profile, generate_feeder, Perturbation, ProfileParams,
};
pub use series::{node_order, on_grid, TimeSeries};
pub use split::{next_month, split_train_test, SplitSpec};

/// Grid spacing.
pub const STEP_MINUTES: i64 = 15;
/// Readings in one full day.
pub const SAMPLES_PER_DAY: usize = 96;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("timestamp {0} is not on the 15-minute grid")]
    OffGrid(NaiveDateTime),
    #[error("non-finite reading at index {index}")]
    NonFinite { index: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid lag spec: {0}")]
    InvalidLags(String),
    #[error("node {node}: no timestamp has every lag resolvable")]
    EmptyDataset { node: String },
    #[error("split boundary {boundary} outside data range [{start}, {end})")]
    BoundaryOutOfRange {
        boundary: NaiveDate,
        start: NaiveDateTime,
        end: NaiveDateTime,
    },
}

#[cfg(test)]
pub(crate) fn default_profile_start() -> NaiveDateTime {
    ProfileParams::default().start
}
