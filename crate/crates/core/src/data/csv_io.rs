//! Smart-meter CSV ingestion and export.
//!
//! Input is any header-bearing CSV with (at least) a timestamp, a node id and
//! a power column; a [`CsvSchema`] names them. Lines starting with `#` are
//! comments. Readings are snapped onto the 15-minute grid when within one
//! minute of it and rejected otherwise. Every input row ends up either used,
//! superseded by a later duplicate, or listed in the rejection report.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime, Timelike};
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::series::node_order;
use super::{TimeSeries, STEP_MINUTES};

/// Snap tolerance around grid points, in seconds.
const SNAP_SECONDS: i64 = 60;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("line {line}: unparsable timestamp {value:?}")]
    Timestamp { line: u64, value: String },
    #[error("no data rows")]
    Empty,
}

/// Which CSV columns hold the required fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub timestamp: String,
    pub node_id: String,
    pub power_kw: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            node_id: "node_id".into(),
            power_kw: "power_kw".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: u64,
    pub rows_used: u64,
    /// Rows superseded by a later row for the same node and grid point.
    pub duplicates: u64,
    pub rejects: Vec<Reject>,
}

/// Accepts RFC 3339, `YYYY-MM-DD HH:MM[:SS]` and the `T`-separated variants.
/// Offsets are dropped: the local wall-clock time is kept.
pub fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.naive_local());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%#z", "%Y-%m-%dT%H:%M:%S%#z"] {
        if let Ok(dt) = DateTime::parse_from_str(raw, fmt) {
            return Some(dt.naive_local());
        }
    }
    for fmt in [
        TIMESTAMP_FORMAT,
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%dT%H:%M:%S",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt);
        }
    }
    None
}

/// Nearest grid point if `ts` is within the snap tolerance of one.
fn snap(ts: NaiveDateTime) -> Option<NaiveDateTime> {
    let step = STEP_MINUTES * 60;
    let secs = ts.num_seconds_from_midnight() as i64;
    let off = secs % step;
    let midnight = ts.date().and_hms_opt(0, 0, 0).expect("midnight exists");
    if off <= SNAP_SECONDS {
        Some(midnight + Duration::seconds(secs - off))
    } else if step - off <= SNAP_SECONDS {
        Some(midnight + Duration::seconds(secs - off + step))
    } else {
        None
    }
}

pub fn ingest_csv(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
) -> Result<(Vec<TimeSeries>, IngestReport), IngestError> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file, schema)
}

pub fn ingest_reader<R: Read>(
    reader: R,
    schema: &CsvSchema,
) -> Result<(Vec<TimeSeries>, IngestReport), IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(IngestError::Empty);
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let (ts_col, node_col, power_col) = (
        col(&schema.timestamp)?,
        col(&schema.node_id)?,
        col(&schema.power_kw)?,
    );

    let mut report = IngestReport::default();
    let mut nodes: BTreeMap<String, BTreeMap<NaiveDateTime, f64>> = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        report.rows_read += 1;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut reject = |reason: String| report.rejects.push(Reject { line, reason });

        let (Some(raw_ts), Some(node), Some(raw_p)) =
            (record.get(ts_col), record.get(node_col), record.get(power_col))
        else {
            reject(format!("expected at least {} fields", headers.len()));
            continue;
        };
        let ts = parse_timestamp(raw_ts).ok_or_else(|| IngestError::Timestamp {
            line,
            value: raw_ts.to_string(),
        })?;
        if node.is_empty() {
            reject("empty node id".into());
            continue;
        }
        let power = match raw_p.parse::<f64>() {
            Ok(p) if p.is_finite() => p,
            _ => {
                reject(format!("unparsable power value {raw_p:?}"));
                continue;
            }
        };
        let Some(grid_ts) = snap(ts) else {
            reject(format!("timestamp {raw_ts} is more than 1 minute off the 15-minute grid"));
            continue;
        };
        if nodes
            .entry(node.to_string())
            .or_default()
            .insert(grid_ts, power)
            .is_some()
        {
            warn!("line {line}: duplicate reading for node {node} at {grid_ts}; keeping the later row");
            report.duplicates += 1;
        }
    }
    if report.rows_read == 0 {
        return Err(IngestError::Empty);
    }

    let mut out = Vec::with_capacity(nodes.len());
    for (node, readings) in nodes {
        let (&first, _) = readings.first_key_value().expect("node has a reading");
        let (&last, _) = readings.last_key_value().expect("node has a reading");
        let n = ((last - first).num_minutes() / STEP_MINUTES) as usize + 1;
        let mut values = vec![None; n];
        for (ts, v) in &readings {
            values[((*ts - first).num_minutes() / STEP_MINUTES) as usize] = Some(*v);
        }
        report.rows_used += readings.len() as u64;
        out.push(TimeSeries::new(node, first, values).expect("snapped and finite"));
    }
    out.sort_by(|a, b| node_order(a.node_id(), b.node_id()));
    Ok((out, report))
}

/// Writes present readings as `timestamp,node_id,power_kw`, optionally
/// preceded by `# key=value` comment lines.
pub fn write_series_csv<W: Write>(
    mut writer: W,
    series: &[TimeSeries],
    comments: &[(&str, &str)],
) -> std::io::Result<()> {
    for (k, v) in comments {
        writeln!(writer, "# {k}={v}")?;
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "node_id", "power_kw"])?;
    for s in series {
        for (ts, v) in s.readings() {
            w.write_record([
                ts.format(TIMESTAMP_FORMAT).to_string(),
                s.node_id().to_string(),
                v.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn export_csv(
    path: impl AsRef<Path>,
    series: &[TimeSeries],
    comments: &[(&str, &str)],
) -> std::io::Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_series_csv(file, series, comments)
}
