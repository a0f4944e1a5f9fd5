use chrono::{Duration, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::GridError;
use crate::data::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// Signed change between consecutive readings.
    DeltaP,
    /// Magnitude of the change between consecutive readings.
    AbsDeltaP,
    /// The readings themselves.
    AbsolutePower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdWindow {
    /// The 24 hours starting at midnight of this date.
    Day(NaiveDate),
    /// `[start, end)` pooled over every series passed in.
    Span {
        start: NaiveDateTime,
        end: NaiveDateTime,
    },
    /// Every reading of every series passed in.
    All,
}

impl ThresholdWindow {
    fn bounds(&self) -> (Option<NaiveDateTime>, Option<NaiveDateTime>) {
        match *self {
            Self::Day(d) => {
                let s = d.and_hms_opt(0, 0, 0).expect("midnight exists");
                (Some(s), Some(s + Duration::days(1)))
            }
            Self::Span { start, end } => (Some(start), Some(end)),
            Self::All => (None, None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdPolicy {
    pub percentile: f64,
    pub window: ThresholdWindow,
    pub quantity: Quantity,
}

impl ThresholdPolicy {
    pub fn new(percentile: f64, window: ThresholdWindow, quantity: Quantity) -> Result<Self, GridError> {
        let p = Self {
            percentile,
            window,
            quantity,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.percentile > 0.0 && self.percentile <= 100.0) {
            return Err(GridError::InvalidPolicy(format!(
                "percentile must lie in (0, 100], got {}",
                self.percentile
            )));
        }
        if let ThresholdWindow::Span { start, end } = self.window {
            if end <= start {
                return Err(GridError::InvalidPolicy(format!("empty span {start}..{end}")));
            }
        }
        Ok(())
    }
}

/// Smallest value with at least `p` percent of `values` at or below it.
///
/// Returns `None` for an empty slice. NaNs are not expected.
pub fn nearest_rank(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    // p * n first: exact for integral percentiles, so whole ranks stay whole
    let rank = (p * v.len() as f64 / 100.0).ceil() as usize;
    Some(v[rank.clamp(1, v.len()) - 1])
}

/// Nearest-rank percentile of the policy's quantity over its window.
///
/// Differences are taken only between two present readings that both lie
/// inside the window.
pub fn compute_threshold(series: &[TimeSeries], policy: &ThresholdPolicy) -> Result<f64, GridError> {
    policy.validate()?;
    let (lo, hi) = policy.window.bounds();
    let inside = |t: NaiveDateTime| lo.is_none_or(|l| t >= l) && hi.is_none_or(|h| t < h);

    let mut values = Vec::new();
    for s in series {
        for i in 0..s.len() {
            let t = s.timestamp(i);
            if !inside(t) {
                continue;
            }
            let Some(p) = s.value(i) else { continue };
            match policy.quantity {
                Quantity::AbsolutePower => values.push(p),
                Quantity::DeltaP | Quantity::AbsDeltaP => {
                    if i == 0 || !inside(s.timestamp(i - 1)) {
                        continue;
                    }
                    if let Some(prev) = s.value(i - 1) {
                        let d = p - prev;
                        values.push(if policy.quantity == Quantity::AbsDeltaP { d.abs() } else { d });
                    }
                }
            }
        }
    }
    nearest_rank(&values, policy.percentile).ok_or(GridError::EmptyWindow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::default_base_profile;

    fn series(vals: &[f64]) -> TimeSeries {
        let start = NaiveDate::from_ymd_opt(2021, 6, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        TimeSeries::from_values("x", start, vals.to_vec()).unwrap()
    }

    #[test]
    fn nearest_rank_by_hand() {
        let v = [15.0, 20.0, 35.0, 40.0, 50.0];
        assert_eq!(nearest_rank(&v, 5.0), Some(15.0));
        assert_eq!(nearest_rank(&v, 30.0), Some(20.0));
        assert_eq!(nearest_rank(&v, 40.0), Some(20.0));
        assert_eq!(nearest_rank(&v, 50.0), Some(35.0));
        assert_eq!(nearest_rank(&v, 100.0), Some(50.0));
        assert_eq!(nearest_rank(&[], 50.0), None);
    }

    #[test]
    fn ten_values_ninetieth_percentile() {
        let v = [7.0, 1.0, 9.0, 3.0, 10.0, 2.0, 8.0, 4.0, 6.0, 5.0];
        assert_eq!(nearest_rank(&v, 90.0), Some(9.0));
        assert_eq!(nearest_rank(&v, 91.0), Some(10.0));
    }

    #[test]
    fn constant_series_has_zero_delta_threshold() {
        let s = series(&[4.0; 96]);
        let p = ThresholdPolicy::new(90.0, ThresholdWindow::All, Quantity::DeltaP).unwrap();
        assert_eq!(compute_threshold(&[s], &p).unwrap(), 0.0);
    }

    #[test]
    fn window_restricts_readings() {
        let s = default_base_profile(3, 1).unwrap();
        let day = NaiveDate::from_ymd_opt(2021, 6, 2).unwrap();
        let p = ThresholdPolicy::new(100.0, ThresholdWindow::Day(day), Quantity::AbsolutePower).unwrap();
        let expected = (96..192).map(|i| s.value(i).unwrap()).fold(f64::MIN, f64::max);
        assert_eq!(compute_threshold(std::slice::from_ref(&s), &p).unwrap(), expected);

        let far = NaiveDate::from_ymd_opt(2022, 1, 1).unwrap();
        let p = ThresholdPolicy::new(90.0, ThresholdWindow::Day(far), Quantity::DeltaP).unwrap();
        assert_eq!(compute_threshold(&[s], &p), Err(GridError::EmptyWindow));
    }

    #[test]
    fn single_reading_has_no_delta() {
        let p = ThresholdPolicy::new(90.0, ThresholdWindow::All, Quantity::DeltaP).unwrap();
        assert_eq!(compute_threshold(&[series(&[1.0])], &p), Err(GridError::EmptyWindow));
    }

    #[test]
    fn policy_validation() {
        assert!(ThresholdPolicy::new(0.0, ThresholdWindow::All, Quantity::DeltaP).is_err());
        assert!(ThresholdPolicy::new(100.5, ThresholdWindow::All, Quantity::DeltaP).is_err());
        assert!(ThresholdPolicy::new(100.0, ThresholdWindow::All, Quantity::DeltaP).is_ok());
    }
}
