use std::collections::BTreeSet;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use super::TimeSeries;

/// Whole-day calendar selection.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalendarFilter {
    /// Drop Saturdays and Sundays.
    pub weekdays_only: bool,
    pub holidays: BTreeSet<NaiveDate>,
}

impl CalendarFilter {
    pub fn weekdays() -> Self {
        Self {
            weekdays_only: true,
            holidays: BTreeSet::new(),
        }
    }

    pub fn keeps(&self, date: NaiveDate) -> bool {
        if self.weekdays_only && matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
            return false;
        }
        !self.holidays.contains(&date)
    }

    pub fn is_noop(&self) -> bool {
        !self.weekdays_only && self.holidays.is_empty()
    }
}

/// Masks every reading on a removed day as missing.
///
/// The grid keeps its true timestamps, so a lag that would reach into a
/// removed day resolves to a gap and the sample is dropped.
pub fn filter_days(series: &TimeSeries, filter: &CalendarFilter) -> TimeSeries {
    if filter.is_noop() {
        return series.clone();
    }
    let mut out = series.clone();
    let start = series.start();
    for (i, v) in out.values_mut().iter_mut().enumerate() {
        let ts = start + super::series::step() * i as i32;
        if !filter.keeps(ts.date()) {
            *v = None;
        }
    }
    out.set_filter(filter.clone());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{default_base_profile, extract_samples, LagSpec};

    #[test]
    fn noop_filter_is_identity() {
        let s = default_base_profile(7, 1).unwrap();
        assert_eq!(filter_days(&s, &CalendarFilter::default()), s);
    }

    #[test]
    fn weekdays_only_keeps_five_days_of_a_week() {
        let s = default_base_profile(7, 1).unwrap();
        let f = filter_days(&s, &CalendarFilter::weekdays());
        assert_eq!(f.present_count(), 5 * 96);
        assert_eq!(f.len(), s.len());
    }

    #[test]
    fn holidays_are_removed_whole() {
        let s = default_base_profile(3, 1).unwrap();
        let mut filter = CalendarFilter::default();
        filter.holidays.insert(s.start().date().succ_opt().unwrap());
        let f = filter_days(&s, &filter);
        assert_eq!(f.present_count(), 2 * 96);
        assert!((96..192).all(|i| f.value(i).is_none()));
    }

    #[test]
    fn samples_never_draw_from_removed_days() {
        let s = default_base_profile(28, 4).unwrap();
        let mut filter = CalendarFilter::weekdays();
        filter.holidays.insert(NaiveDate::from_ymd_opt(2021, 6, 16).unwrap());
        let f = filter_days(&s, &filter);
        let lags = LagSpec::default();
        let d = extract_samples(&f, &lags).unwrap();
        assert_eq!(d.provenance.filter.as_ref(), Some(&filter));
        for sample in &d.samples {
            assert!(filter.keeps(sample.timestamp.date()));
            for &m in lags.minutes() {
                let t = sample.timestamp - chrono::Duration::minutes(m as i64);
                assert!(filter.keeps(t.date()), "{} reaches {}", sample.timestamp, t);
            }
        }
    }
}
