use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{extract_samples, DataError, Dataset, LagSpec, TimeSeries};

/// Month-aligned train/test boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// First day of the test month.
    pub boundary: NaiveDate,
    /// Days before the boundary whose readings test samples may use as inputs.
    pub carry_over_days: u32,
}

impl SplitSpec {
    pub fn new(boundary: NaiveDate) -> Result<Self, DataError> {
        if boundary.day() != 1 {
            return Err(DataError::InvalidParameter(format!(
                "split boundary {boundary} is not the first day of a month"
            )));
        }
        Ok(Self {
            boundary,
            carry_over_days: 1,
        })
    }

    pub fn boundary_time(&self) -> NaiveDateTime {
        self.boundary.and_hms_opt(0, 0, 0).expect("midnight exists")
    }

    /// Exclusive end of the test month.
    pub fn test_end(&self) -> NaiveDateTime {
        next_month(self.boundary)
            .and_hms_opt(0, 0, 0)
            .expect("midnight exists")
    }

    /// Earliest reading a test sample may use as an input.
    pub fn test_input_start(&self) -> NaiveDateTime {
        self.boundary_time() - Duration::days(self.carry_over_days as i64)
    }
}

/// First day of the month after `date`'s month.
pub fn next_month(date: NaiveDate) -> NaiveDate {
    let (y, m) = if date.month() == 12 {
        (date.year() + 1, 1)
    } else {
        (date.year(), date.month() + 1)
    };
    NaiveDate::from_ymd_opt(y, m, 1).expect("first of month exists")
}

/// Train samples have targets before the boundary; test samples have targets
/// in the month that starts at the boundary and inputs no earlier than the
/// carry-over window.
pub fn split_train_test(
    series: &TimeSeries,
    lags: &LagSpec,
    split: &SplitSpec,
) -> Result<(Dataset, Dataset), DataError> {
    let b = split.boundary_time();
    if b <= series.start() || b >= series.end() {
        return Err(DataError::BoundaryOutOfRange {
            boundary: split.boundary,
            start: series.start(),
            end: series.end(),
        });
    }
    let train = extract_samples(&series.slice(series.start(), b), lags)?;
    let test_src = series.slice(split.test_input_start(), split.test_end());
    let mut test = extract_samples(&test_src, lags)?;
    test.samples.retain(|s| s.timestamp >= b);
    if test.samples.is_empty() {
        return Err(DataError::EmptyDataset {
            node: series.node_id().to_string(),
        });
    }
    Ok((train, test))
}
