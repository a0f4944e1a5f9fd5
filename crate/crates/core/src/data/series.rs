use chrono::{Duration, NaiveDateTime, Timelike};

use super::{CalendarFilter, DataError, STEP_MINUTES};

/// One node's readings on a fixed 15-minute grid.
///
/// Missing readings are explicit `None` entries; the grid itself never has
/// holes, so index `i` always corresponds to `start + 15 min * i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    node_id: String,
    start: NaiveDateTime,
    values: Vec<Option<f64>>,
    filter: Option<CalendarFilter>,
}

pub(crate) fn step() -> Duration {
    Duration::minutes(STEP_MINUTES)
}

/// True when `ts` falls exactly on a quarter-hour.
pub fn on_grid(ts: NaiveDateTime) -> bool {
    ts.second() == 0 && ts.nanosecond() == 0 && ts.minute().is_multiple_of(STEP_MINUTES as u32)
}

impl TimeSeries {
    pub fn new(
        node_id: impl Into<String>,
        start: NaiveDateTime,
        values: Vec<Option<f64>>,
    ) -> Result<Self, DataError> {
        if !on_grid(start) {
            return Err(DataError::OffGrid(start));
        }
        if let Some(i) = values.iter().position(|v| v.is_some_and(|x| !x.is_finite())) {
            return Err(DataError::NonFinite { index: i });
        }
        Ok(Self {
            node_id: node_id.into(),
            start,
            values,
            filter: None,
        })
    }

    /// A series without gaps.
    pub fn from_values(
        node_id: impl Into<String>,
        start: NaiveDateTime,
        values: Vec<f64>,
    ) -> Result<Self, DataError> {
        Self::new(node_id, start, values.into_iter().map(Some).collect())
    }

    pub fn node_id(&self) -> &str {
        &self.node_id
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    /// First grid point after the last reading.
    pub fn end(&self) -> NaiveDateTime {
        self.timestamp(self.values.len())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn value(&self, i: usize) -> Option<f64> {
        self.values.get(i).copied().flatten()
    }

    pub fn timestamp(&self, i: usize) -> NaiveDateTime {
        self.start + step() * i as i32
    }

    /// Grid index of `ts`, if it lies on the grid inside the series.
    pub fn index_of(&self, ts: NaiveDateTime) -> Option<usize> {
        if ts < self.start || !on_grid(ts) {
            return None;
        }
        let i = ((ts - self.start).num_minutes() / STEP_MINUTES) as usize;
        (i < self.values.len()).then_some(i)
    }

    pub fn value_at(&self, ts: NaiveDateTime) -> Option<f64> {
        self.index_of(ts).and_then(|i| self.value(i))
    }

    pub fn present_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// `(timestamp, value)` for every present reading.
    pub fn readings(&self) -> impl Iterator<Item = (NaiveDateTime, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|x| (self.timestamp(i), x)))
    }

    /// The calendar filter this series was passed through, if any.
    pub fn applied_filter(&self) -> Option<&CalendarFilter> {
        self.filter.as_ref()
    }

    pub(crate) fn set_filter(&mut self, filter: CalendarFilter) {
        self.filter = Some(filter);
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Option<f64>] {
        &mut self.values
    }

    /// The part of the series inside `[from, to)`, clipped to the data.
    ///
    /// Bounds are rounded up to the grid. The result may be empty.
    pub fn slice(&self, from: NaiveDateTime, to: NaiveDateTime) -> TimeSeries {
        let lo = self.ceil_index(from).min(self.values.len());
        let hi = self.ceil_index(to).clamp(lo, self.values.len());
        TimeSeries {
            node_id: self.node_id.clone(),
            start: self.timestamp(lo),
            values: self.values[lo..hi].to_vec(),
            filter: self.filter.clone(),
        }
    }

    fn ceil_index(&self, ts: NaiveDateTime) -> usize {
        if ts <= self.start {
            return 0;
        }
        let secs = (ts - self.start).num_seconds();
        let step = STEP_MINUTES * 60;
        ((secs + step - 1) / step) as usize
    }

    /// Same readings under another node id.
    pub fn with_node_id(mut self, node_id: impl Into<String>) -> Self {
        self.node_id = node_id.into();
        self
    }

    /// Series with every reading replaced by `f(timestamp, value)`.
    pub fn map_values(&self, mut f: impl FnMut(NaiveDateTime, f64) -> f64) -> TimeSeries {
        let mut out = self.clone();
        for (i, v) in out.values.iter_mut().enumerate() {
            if let Some(x) = v {
                *x = f(self.start + step() * i as i32, *x);
            }
        }
        out
    }
}

/// Orders node ids numerically when both parse as integers, else lexically.
pub fn node_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        _ => a.cmp(b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn t0() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2021, 6, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
    }

    #[test]
    fn rejects_off_grid_start_and_nan() {
        let bad = t0() + Duration::minutes(7);
        assert!(matches!(
            TimeSeries::from_values("a", bad, vec![1.0]),
            Err(DataError::OffGrid(_))
        ));
        assert!(matches!(
            TimeSeries::from_values("a", t0(), vec![1.0, f64::NAN]),
            Err(DataError::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn indexing_and_slicing() {
        let s = TimeSeries::from_values("a", t0(), (0..10).map(f64::from).collect()).unwrap();
        assert_eq!(s.end(), t0() + Duration::minutes(150));
        assert_eq!(s.index_of(t0() + Duration::minutes(45)), Some(3));
        assert_eq!(s.index_of(t0() + Duration::minutes(46)), None);
        assert_eq!(s.index_of(t0() + Duration::minutes(150)), None);
        let part = s.slice(t0() + Duration::minutes(20), t0() + Duration::minutes(60));
        assert_eq!(part.start(), t0() + Duration::minutes(30));
        assert_eq!(part.values(), &[Some(2.0), Some(3.0)]);
        assert!(s.slice(s.end(), s.end() + Duration::days(1)).is_empty());
    }

    #[test]
    fn natural_node_ordering() {
        let mut ids = vec!["10", "2", "b", "a", "1"];
        ids.sort_by(|a, b| node_order(a, b));
        assert_eq!(ids, vec!["1", "2", "10", "a", "b"]);
    }
}
