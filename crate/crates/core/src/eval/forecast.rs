use chrono::NaiveDateTime;

use super::{EvalError, ForecastRecord};
use crate::data::{LagSpec, TimeSeries};
use crate::fl::FeatureScaling;
use crate::nn::{forward, ModelWeights};

/// Predicts every grid point `T` in `[from, to)` from the readings at
/// `T - lag`, i.e. always one step ahead of the latest reading used.
///
/// Points whose reading or any lagged reading is missing are skipped.
pub fn one_step_forecast(
    weights: &ModelWeights,
    scaling: FeatureScaling,
    series: &TimeSeries,
    lags: &LagSpec,
    from: NaiveDateTime,
    to: NaiveDateTime,
) -> Result<Vec<ForecastRecord>, EvalError> {
    lags.validate()?;
    let steps = lags.steps();
    let window = series.slice(from, to);
    let Some(first) = series.index_of(window.start()).filter(|_| !window.is_empty()) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::with_capacity(window.len());
    for i in first..first + window.len() {
        let Some(actual) = series.value(i) else { continue };
        let lagged: Option<Vec<f64>> = steps
            .iter()
            .map(|&s| i.checked_sub(s).and_then(|j| series.value(j)))
            .collect();
        let Some(x) = lagged else { continue };
        out.push(ForecastRecord {
            node_id: series.node_id().to_string(),
            timestamp: series.timestamp(i),
            predicted: forward(weights, &scaling.features(&x))?,
            actual,
        });
    }
    Ok(out)
}

/// Predictions as a grid series over `[from, to)`; grid points without a
/// record are missing.
pub fn records_to_series(
    node_id: &str,
    from: NaiveDateTime,
    to: NaiveDateTime,
    records: &[ForecastRecord],
) -> Result<TimeSeries, EvalError> {
    let n = ((to - from).num_minutes() / crate::data::STEP_MINUTES).max(0) as usize;
    let grid = TimeSeries::new(node_id, from, vec![None; n])?;
    let mut values = vec![None; n];
    for r in records.iter().filter(|r| r.node_id == node_id) {
        if let Some(i) = grid.index_of(r.timestamp) {
            values[i] = Some(r.predicted);
        }
    }
    Ok(TimeSeries::new(node_id, from, values)?)
}
