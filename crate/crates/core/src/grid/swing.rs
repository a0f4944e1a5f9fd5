use std::collections::BTreeMap;

use chrono::{NaiveDate, Timelike};
use serde::{Deserialize, Serialize};

use super::{EventSource, GridError, SwingEvent};
use crate::data::{TimeSeries, SAMPLES_PER_DAY, STEP_MINUTES};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwingMode {
    /// Upswings only: `dP > P_T`.
    #[default]
    Signed,
    /// Either direction: `|dP| > P_T`.
    Absolute,
}

fn scan(series: &TimeSeries, threshold: f64, mode: SwingMode, source: EventSource) -> Vec<SwingEvent> {
    let mut out = Vec::new();
    for i in 1..series.len() {
        let (Some(prev), Some(cur)) = (series.value(i - 1), series.value(i)) else {
            continue;
        };
        let d = cur - prev;
        let hit = match mode {
            SwingMode::Signed => d > threshold,
            SwingMode::Absolute => d.abs() > threshold,
        };
        if hit {
            out.push(SwingEvent {
                node_id: series.node_id().to_string(),
                timestamp: series.timestamp(i),
                delta_p: d,
                source,
            });
        }
    }
    out
}

/// One event per step whose rise exceeds `threshold`.
pub fn detect_swings(series: &TimeSeries, threshold: f64) -> Vec<SwingEvent> {
    scan(series, threshold, SwingMode::Signed, EventSource::Actual)
}

pub fn detect_swings_with(series: &TimeSeries, threshold: f64, mode: SwingMode) -> Vec<SwingEvent> {
    scan(series, threshold, mode, EventSource::Actual)
}

/// [`detect_swings`] on a forecast series; events are tagged as predicted.
pub fn predict_swings(predicted: &TimeSeries, threshold: f64) -> Vec<SwingEvent> {
    scan(predicted, threshold, SwingMode::Signed, EventSource::Predicted)
}

pub fn predict_swings_with(predicted: &TimeSeries, threshold: f64, mode: SwingMode) -> Vec<SwingEvent> {
    scan(predicted, threshold, mode, EventSource::Predicted)
}

/// Average number of events per quarter-hour slot of the day.
pub fn swing_histogram(events: &[SwingEvent], days: usize) -> Result<[f64; SAMPLES_PER_DAY], GridError> {
    if days == 0 {
        return Err(GridError::ZeroDays);
    }
    let mut counts = [0usize; SAMPLES_PER_DAY];
    for e in events {
        let minute = e.timestamp.hour() as i64 * 60 + e.timestamp.minute() as i64;
        counts[(minute / STEP_MINUTES) as usize] += 1;
    }
    Ok(counts.map(|c| c as f64 / days as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayReduction {
    pub date: NaiveDate,
    pub before: usize,
    pub after: usize,
    /// `before - after`; negative when curtailment added swings that day.
    pub reduction: i64,
}

/// Per-day event counts before and after an intervention, for every date
/// that appears in either list.
pub fn swing_reduction_report(before: &[SwingEvent], after: &[SwingEvent]) -> Vec<DayReduction> {
    let mut days: BTreeMap<NaiveDate, (usize, usize)> = BTreeMap::new();
    for e in before {
        days.entry(e.date()).or_default().0 += 1;
    }
    for e in after {
        days.entry(e.date()).or_default().1 += 1;
    }
    days.into_iter()
        .map(|(date, (b, a))| DayReduction {
            date,
            before: b,
            after: a,
            reduction: b as i64 - a as i64,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDateTime;
    use proptest::prelude::*;

    fn start() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2021, 6, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    fn series(vals: Vec<f64>) -> TimeSeries {
        TimeSeries::from_values("7", start(), vals).unwrap()
    }

    #[test]
    fn constant_series_has_no_swings() {
        assert!(detect_swings(&series(vec![3.0; 50]), 0.0).is_empty());
    }

    #[test]
    fn single_step_is_one_event() {
        let s = series(vec![1.0, 1.0, 6.0, 6.0]);
        let ev = detect_swings(&s, 4.0);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].delta_p, 5.0);
        assert_eq!(ev[0].timestamp, s.timestamp(2));
        assert_eq!(ev[0].source, EventSource::Actual);
    }

    #[test]
    fn signed_mode_ignores_drops() {
        let s = series(vec![6.0, 1.0]);
        assert!(detect_swings(&s, 4.0).is_empty());
        assert_eq!(detect_swings_with(&s, 4.0, SwingMode::Absolute).len(), 1);
    }

    #[test]
    fn gaps_break_differences() {
        let s = TimeSeries::new("g", start(), vec![Some(0.0), None, Some(10.0)]).unwrap();
        assert!(detect_swings(&s, 1.0).is_empty());
    }

    #[test]
    fn prediction_tags_and_matches_detection() {
        let s = series(vec![0.0, 5.0, 2.0, 9.0]);
        let a = detect_swings(&s, 1.0);
        let p = predict_swings(&s, 1.0);
        assert_eq!(a.len(), p.len());
        for (x, y) in a.iter().zip(&p) {
            assert_eq!((x.timestamp, x.delta_p), (y.timestamp, y.delta_p));
            assert_eq!(y.source, EventSource::Predicted);
        }
    }

    #[test]
    fn histogram_bins() {
        assert_eq!(swing_histogram(&[], 3).unwrap(), [0.0; 96]);
        assert_eq!(swing_histogram(&[], 0), Err(GridError::ZeroDays));
        let events: Vec<SwingEvent> = (0..30)
            .map(|d| SwingEvent {
                node_id: "1".into(),
                timestamp: start() + chrono::Duration::days(d) + chrono::Duration::hours(18),
                delta_p: 1.0,
                source: EventSource::Actual,
            })
            .collect();
        let h = swing_histogram(&events, 30).unwrap();
        assert_eq!(h[72], 1.0);
        assert_eq!(h.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn reduction_report_cases() {
        let s = series((0..300).map(|i| ((i * 37) % 11) as f64).collect());
        let ev = detect_swings(&s, 3.0);
        let same = swing_reduction_report(&ev, &ev);
        assert!(same.iter().all(|d| d.reduction == 0));
        let none = swing_reduction_report(&ev, &[]);
        assert_eq!(none.iter().map(|d| d.before).sum::<usize>(), ev.len());
        assert!(none.iter().all(|d| d.reduction == d.before as i64));
    }

    proptest! {
        #[test]
        fn histogram_conserves_mass(hours in proptest::collection::vec(0i64..24 * 30 * 4, 0..200), days in 1usize..40) {
            let events: Vec<SwingEvent> = hours
                .iter()
                .map(|&q| SwingEvent {
                    node_id: "n".into(),
                    timestamp: start() + chrono::Duration::minutes(15 * q),
                    delta_p: 1.0,
                    source: EventSource::Actual,
                })
                .collect();
            let h = swing_histogram(&events, days).unwrap();
            let total: f64 = h.iter().map(|b| b * days as f64).sum();
            prop_assert!((total - events.len() as f64).abs() < 1e-9);
        }

        #[test]
        fn reduction_totals_reconcile(
            a in proptest::collection::vec(-5.0f64..5.0, 2..400),
            b in proptest::collection::vec(-5.0f64..5.0, 2..400),
            t in 0.0f64..4.0,
        ) {
            let before = detect_swings(&series(a), t);
            let after = detect_swings(&series(b), t);
            let r = swing_reduction_report(&before, &after);
            let sum: i64 = r.iter().map(|d| d.reduction).sum();
            prop_assert_eq!(sum, before.len() as i64 - after.len() as i64);
        }
    }
}
