//! The experiment stages behind the command-line tool.
//!
//! Every stage reads and writes files in one output directory. Each artifact
//! carries the hash of the config that produced it (a `# config_hash=` line
//! in CSV files, a `config_hash` field in JSON files), and a stage refuses
//! inputs stamped with a different hash.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, SeedStream, ThresholdScope};
use crate::data::{
    base_profile, export_csv, filter_days, generate_feeder, ingest_csv, split_train_test,
    DataError, IngestError, TimeSeries, SAMPLES_PER_DAY, TIMESTAMP_FORMAT,
};
use crate::eval::{
    fleet_rmse, group_by_node, one_step_forecast, records_to_series, reference_values,
    EvalError, EvalReport, FleetRmse, ForecastRecord,
};
use crate::fl::{
    decode_weights, encode_weights, train, FeatureScaling, Federate, FederateId, FlError,
    GlobalModel, StopReason, TrainingLog,
};
use crate::grid::{
    compute_threshold, detect_swings_with, peak_shave, predict_swings_with, swing_histogram,
    swing_reduction_report, CurtailmentCommand, DayReduction, GridError, Quantity, SwingEvent,
    ThresholdPolicy, ThresholdWindow,
};
use crate::nn::{init_weights, ModelWeights};
use crate::rng::derive_seed;

pub const FEEDER_CSV: &str = "feeder.csv";
pub const INGEST_REPORT_JSON: &str = "ingest_report.json";
pub const MODEL_JSON: &str = "model.json";
pub const TRAINING_LOG_JSON: &str = "training_log.json";
pub const FORECAST_CSV: &str = "forecasts.csv";
pub const SWING_EVENTS_CSV: &str = "swing_events.csv";
pub const SWING_HISTOGRAM_CSV: &str = "swing_histogram.csv";
pub const COMMANDS_CSV: &str = "curtailment_commands.csv";
pub const REDUCTION_CSV: &str = "swing_reduction.csv";
pub const GRID_SUMMARY_JSON: &str = "grid_summary.json";
pub const REPORT_JSON: &str = "report.json";

const MODEL_VERSION: u32 = 1;
const NORMALIZATION: &str = "inputs divided by the pooled std of each federate's own training inputs; targets in kW";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("incompatible artifact: {0}")]
    Incompatible(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Ingest { path: PathBuf, source: IngestError },
    #[error("node {node}: {source}")]
    Data { node: String, source: DataError },
    #[error("{artifact} was produced by config {found}, current config is {expected}")]
    HashMismatch {
        artifact: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: {reason}")]
    BadArtifact { path: PathBuf, reason: String },
    #[error(transparent)]
    Training(#[from] FlError),
    #[error("node {node}: {source}")]
    Grid { node: String, source: GridError },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl PipelineError {
    /// 2 for configuration problems, 3 for data problems, 4 for divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Incompatible(_) => 2,
            Self::Training(FlError::Divergence { .. }) => 4,
            _ => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn bad(path: &Path, reason: impl ToString) -> PipelineError {
    PipelineError::BadArtifact {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| bad(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Value of a leading `# key=value` comment line, if any.
fn csv_comment(path: &Path, key: &str) -> Result<Option<String>, PipelineError> {
    let f = File::open(path).map_err(io_err(path))?;
    for line in BufReader::new(f).lines() {
        let line = line.map_err(io_err(path))?;
        let Some(c) = line.strip_prefix('#') else { break };
        if let Some((k, v)) = c.trim().split_once('=') {
            if k.trim() == key {
                return Ok(Some(v.trim().to_string()));
            }
        }
    }
    Ok(None)
}

fn check_hash(path: &Path, found: Option<String>, cfg_hash: &str) -> Result<(), PipelineError> {
    match found {
        Some(h) if h != cfg_hash => Err(PipelineError::HashMismatch {
            artifact: path.to_path_buf(),
            expected: cfg_hash.to_string(),
            found: h,
        }),
        _ => Ok(()),
    }
}

fn hash_line(cfg: &ExperimentConfig) -> String {
    format!("# config_hash={}\n", cfg.hash())
}

fn data_path(cfg: &ExperimentConfig, out: &Path) -> PathBuf {
    cfg.paths.data.clone().unwrap_or_else(|| out.join(FEEDER_CSV))
}

fn boundary(cfg: &ExperimentConfig) -> NaiveDateTime {
    cfg.split().boundary_time()
}

fn horizon_end(cfg: &ExperimentConfig) -> NaiveDateTime {
    let split = cfg.split();
    match cfg.forecast.horizon_days {
        Some(d) => (split.boundary_time() + Duration::days(d as i64)).min(split.test_end()),
        None => split.test_end(),
    }
}

/// Writes the synthetic feeder as one CSV and returns its path.
pub fn cmd_gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf, PipelineError> {
    let t = &cfg.topology;
    let data_err = |source| PipelineError::Data {
        node: "0".into(),
        source,
    };
    let base = base_profile(&t.profile, t.days, cfg.seed_for(SeedStream::Profile)).map_err(data_err)?;
    let nodes = generate_feeder(&base, t.num_nodes, t.perturbation, cfg.seed_for(SeedStream::Feeder))
        .map_err(data_err)?;
    let path = out.join(FEEDER_CSV);
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let hash = cfg.hash();
    export_csv(&path, &nodes, &[("config_hash", &hash)]).map_err(io_err(&path))?;
    log::info!("wrote {} series to {}", nodes.len(), path.display());
    Ok(path)
}

/// Ingests the configured load data and applies the calendar filter.
pub fn load_series(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<TimeSeries>, PipelineError> {
    let path = data_path(cfg, out);
    check_hash(&path, csv_comment(&path, "config_hash")?, &cfg.hash())?;
    let (series, report) = ingest_csv(&path, &cfg.paths.schema).map_err(|source| PipelineError::Ingest {
        path: path.clone(),
        source,
    })?;
    if !report.rejects.is_empty() || report.duplicates > 0 {
        log::warn!(
            "{}: {} rejected rows, {} duplicates",
            path.display(),
            report.rejects.len(),
            report.duplicates
        );
    }
    #[derive(Serialize)]
    struct Stamped<'a> {
        config_hash: String,
        #[serde(flatten)]
        report: &'a crate::data::IngestReport,
    }
    write_json(
        &out.join(INGEST_REPORT_JSON),
        &Stamped {
            config_hash: cfg.hash(),
            report: &report,
        },
    )?;
    Ok(series.iter().map(|s| filter_days(s, &cfg.calendar)).collect())
}

#[derive(Serialize, Deserialize)]
struct ModelHeader<'a> {
    v: u32,
    config_hash: String,
    rounds: u64,
    normalization: String,
    #[serde(borrow)]
    weights: &'a RawValue,
}

#[derive(Serialize)]
struct LogFile<'a> {
    config_hash: &'a str,
    stop_reason: StopReason,
    rounds: &'a [crate::fl::RoundRecord],
}

#[derive(Deserialize)]
struct LogFileOwned {
    config_hash: String,
    #[serde(flatten)]
    log: TrainingLog,
}

/// Trains the global model on every node's pre-boundary data.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<(GlobalModel, TrainingLog), PipelineError> {
    let series = load_series(cfg, out)?;
    let split = cfg.split();
    let fed_seed = cfg.seed_for(SeedStream::Federates);
    let first_edge = series.len().saturating_sub(cfg.topology.edge_resources);
    let mut federates = series
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let (train_set, _) = split_train_test(s, &cfg.lags, &split).map_err(|source| PipelineError::Data {
                node: s.node_id().to_string(),
                source,
            })?;
            let id = if i >= first_edge { FederateId::edge(i) } else { FederateId::home(i) };
            Ok(Federate::new(id, &train_set, derive_seed(fed_seed, i as u64))?)
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;

    let alpha = cfg.aggregation(federates.len())?;
    let w0 = init_weights(&cfg.model, cfg.seed_for(SeedStream::Init)).map_err(FlError::from)?;
    let (g, log) = train(GlobalModel::new(w0), &mut federates, &cfg.training.hyperparams, &alpha)?;

    let hash = cfg.hash();
    let weights = encode_weights(&g.weights).map_err(FlError::from)?;
    let header = ModelHeader {
        v: MODEL_VERSION,
        config_hash: hash.clone(),
        rounds: g.round,
        normalization: NORMALIZATION.into(),
        weights: &RawValue::from_string(weights).map_err(|e| bad(&out.join(MODEL_JSON), e))?,
    };
    let path = out.join(MODEL_JSON);
    let mut w = create(&path)?;
    serde_json::to_writer(&mut w, &header).map_err(|e| bad(&path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(&path))?;

    write_json(
        &out.join(TRAINING_LOG_JSON),
        &LogFile {
            config_hash: &hash,
            stop_reason: log.stop_reason,
            rounds: &log.rounds,
        },
    )?;
    Ok((g, log))
}

/// Loads `model.json`, checking version, hash and feature count.
pub fn read_model(cfg: &ExperimentConfig, out: &Path) -> Result<ModelWeights, PipelineError> {
    let path = out.join(MODEL_JSON);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let header: ModelHeader = serde_json::from_str(&text).map_err(|e| bad(&path, e))?;
    if header.v != MODEL_VERSION {
        return Err(bad(&path, format!("unsupported model version {}", header.v)));
    }
    check_hash(&path, Some(header.config_hash), &cfg.hash())?;
    let w = decode_weights(header.weights.get()).map_err(|e| bad(&path, e))?;
    if w.spec().input_dim != cfg.lags.len() {
        return Err(PipelineError::Incompatible(format!(
            "model takes {} inputs but {} lags are configured",
            w.spec().input_dim,
            cfg.lags.len()
        )));
    }
    Ok(w)
}

pub fn read_training_log(cfg: &ExperimentConfig, out: &Path) -> Result<TrainingLog, PipelineError> {
    let path = out.join(TRAINING_LOG_JSON);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let f: LogFileOwned = serde_json::from_str(&text).map_err(|e| bad(&path, e))?;
    check_hash(&path, Some(f.config_hash), &cfg.hash())?;
    Ok(f.log)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    InSample,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ForecastRow {
    node_id: String,
    timestamp: String,
    predicted: f64,
    actual: f64,
    split: Split,
}

/// One-step-ahead forecasts for the test horizon and the last training days.
pub fn cmd_forecast(
    cfg: &ExperimentConfig,
    out: &Path,
) -> Result<Vec<(Split, ForecastRecord)>, PipelineError> {
    let w = read_model(cfg, out)?;
    let series = load_series(cfg, out)?;
    let split = cfg.split();
    let b = boundary(cfg);
    let end = horizon_end(cfg);
    let in_sample_from = b - Duration::days(cfg.forecast.in_sample_days as i64);

    let per_node = series
        .par_iter()
        .map(|s| {
            let data_err = |source| PipelineError::Data {
                node: s.node_id().to_string(),
                source,
            };
            // the scale is refitted from the node's own training data, exactly as during training
            let (train_set, _) = split_train_test(s, &cfg.lags, &split).map_err(data_err)?;
            let scaling = FeatureScaling::fit(&train_set.samples);
            let before = s.slice(s.start(), b);
            let mut rows: Vec<(Split, ForecastRecord)> =
                one_step_forecast(&w, scaling, &before, &cfg.lags, in_sample_from, b)?
                    .into_iter()
                    .map(|r| (Split::InSample, r))
                    .collect();
            let test_src = s.slice(split.test_input_start(), end);
            rows.extend(
                one_step_forecast(&w, scaling, &test_src, &cfg.lags, b, end)?
                    .into_iter()
                    .map(|r| (Split::Test, r)),
            );
            Ok(rows)
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let rows: Vec<(Split, ForecastRecord)> = per_node.into_iter().flatten().collect();

    let path = out.join(FORECAST_CSV);
    let mut w = create(&path)?;
    w.write_all(hash_line(cfg).as_bytes()).map_err(io_err(&path))?;
    let mut csv = csv::Writer::from_writer(w);
    for (split, r) in &rows {
        csv.serialize(ForecastRow {
            node_id: r.node_id.clone(),
            timestamp: r.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            predicted: r.predicted,
            actual: r.actual,
            split: *split,
        })
        .map_err(|e| bad(&path, e))?;
    }
    csv.flush().map_err(io_err(&path))?;
    Ok(rows)
}

pub fn read_forecasts(
    cfg: &ExperimentConfig,
    out: &Path,
) -> Result<Vec<(Split, ForecastRecord)>, PipelineError> {
    let path = out.join(FORECAST_CSV);
    check_hash(&path, csv_comment(&path, "config_hash")?, &cfg.hash())?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(&path)
        .map_err(|e| bad(&path, e))?;
    let mut out_rows = Vec::new();
    for row in rdr.deserialize::<ForecastRow>() {
        let row = row.map_err(|e| bad(&path, e))?;
        let timestamp = NaiveDateTime::parse_from_str(&row.timestamp, TIMESTAMP_FORMAT)
            .map_err(|e| bad(&path, format!("timestamp {:?}: {e}", row.timestamp)))?;
        out_rows.push((
            row.split,
            ForecastRecord {
                node_id: row.node_id,
                timestamp,
                predicted: row.predicted,
                actual: row.actual,
            },
        ));
    }
    Ok(out_rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeThresholds {
    pub node: String,
    pub swing_kw: f64,
    pub shave_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub config_hash: String,
    pub days: usize,
    pub thresholds: Vec<NodeThresholds>,
    pub actual_swings: usize,
    pub predicted_swings: usize,
    pub swings_after_shaving: usize,
    pub commands: usize,
    /// Time-of-day slot (0..96) with the most actual swings.
    pub actual_peak_bin: usize,
    pub predicted_peak_bin: usize,
    pub per_day: Vec<DayReduction>,
}

fn policy_for(
    scope: ThresholdScope,
    percentile: f64,
    quantity: Quantity,
    cfg: &ExperimentConfig,
    node: &TimeSeries,
) -> ThresholdPolicy {
    let b = boundary(cfg);
    let window = match scope {
        ThresholdScope::LastTrainingDay => ThresholdWindow::Day((b - Duration::days(1)).date()),
        ThresholdScope::TrainingPeriod => ThresholdWindow::Span {
            start: node.start(),
            end: b,
        },
        ThresholdScope::AllData => ThresholdWindow::All,
    };
    ThresholdPolicy {
        percentile,
        window,
        quantity,
    }
}

/// Pooled over all nodes for [`ThresholdScope::AllData`], otherwise per node.
fn thresholds(
    scope: ThresholdScope,
    percentile: f64,
    quantity: Quantity,
    cfg: &ExperimentConfig,
    series: &[TimeSeries],
) -> Result<Vec<f64>, PipelineError> {
    let grid_err = |node: &str| {
        let node = node.to_string();
        move |source| PipelineError::Grid { node, source }
    };
    if scope == ThresholdScope::AllData {
        let p = policy_for(scope, percentile, quantity, cfg, &series[0]);
        let t = compute_threshold(series, &p).map_err(grid_err("*"))?;
        return Ok(vec![t; series.len()]);
    }
    series
        .par_iter()
        .map(|s| {
            let p = policy_for(scope, percentile, quantity, cfg, s);
            compute_threshold(std::slice::from_ref(s), &p).map_err(grid_err(s.node_id()))
        })
        .collect()
}

#[derive(Serialize)]
struct EventRow<'a> {
    node_id: &'a str,
    timestamp: String,
    delta_p: f64,
    source: crate::grid::EventSource,
    stage: &'a str,
}

#[derive(Serialize)]
struct CommandRow<'a> {
    node_id: &'a str,
    timestamp: String,
    issued_at: String,
    cap: f64,
}

fn write_csv_rows<T: Serialize>(
    cfg: &ExperimentConfig,
    path: &Path,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), PipelineError> {
    let mut w = create(path)?;
    w.write_all(hash_line(cfg).as_bytes()).map_err(io_err(path))?;
    let mut csv = csv::Writer::from_writer(w);
    for r in rows {
        csv.serialize(r).map_err(|e| bad(path, e))?;
    }
    csv.flush().map_err(io_err(path))
}

fn peak_bin(h: &[f64; SAMPLES_PER_DAY]) -> usize {
    h.iter()
        .enumerate()
        .fold((0, f64::MIN), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

struct NodeServices {
    actual: Vec<SwingEvent>,
    predicted: Vec<SwingEvent>,
    after: Vec<SwingEvent>,
    commands: Vec<CurtailmentCommand>,
}

/// Swing prediction and peak shaving over the test horizon.
pub fn cmd_grid_services(cfg: &ExperimentConfig, out: &Path) -> Result<GridSummary, PipelineError> {
    let series = load_series(cfg, out)?;
    if series.is_empty() {
        return Err(PipelineError::Data {
            node: "*".into(),
            source: DataError::EmptyDataset { node: "*".into() },
        });
    }
    let forecasts = read_forecasts(cfg, out)?;
    let test: Vec<ForecastRecord> = forecasts
        .into_iter()
        .filter(|(s, _)| *s == Split::Test)
        .map(|(_, r)| r)
        .collect();
    let by_node = group_by_node(&test);

    let b = boundary(cfg);
    let end = horizon_end(cfg);
    let days = ((end - b).num_minutes() / (24 * 60)).max(1) as usize;
    let swing_t = thresholds(cfg.swing.scope, cfg.swing.percentile, cfg.swing.quantity, cfg, &series)?;
    let shave_t = thresholds(
        cfg.shaving.scope,
        cfg.shaving.percentile,
        cfg.shaving.quantity,
        cfg,
        &series,
    )?;

    for (node, recs) in &by_node {
        let Some(s) = series.iter().find(|s| s.node_id() == node) else {
            return Err(PipelineError::Grid {
                node: node.clone(),
                source: GridError::Misaligned("forecast for a node without data".into()),
            });
        };
        if let Some(r) = recs.iter().find(|r| s.value_at(r.timestamp) != Some(r.actual)) {
            return Err(PipelineError::Grid {
                node: node.clone(),
                source: GridError::Misaligned(format!("no matching reading at {}", r.timestamp)),
            });
        }
    }

    let per_node = series
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let node = s.node_id();
            let grid_err = |source| PipelineError::Grid {
                node: node.to_string(),
                source,
            };
            let recs = by_node
                .iter()
                .find(|(n, _)| n == node)
                .map(|(_, r)| r.as_slice())
                .unwrap_or(&[]);
            let actual = s.slice(b, end);
            let predicted = records_to_series(node, b, end, recs)?;
            let shaved = peak_shave(&actual, &predicted, shave_t[i], &cfg.shaving.policy).map_err(grid_err)?;
            Ok(NodeServices {
                actual: detect_swings_with(&actual, swing_t[i], cfg.swing.mode),
                predicted: predict_swings_with(&predicted, swing_t[i], cfg.swing.mode),
                after: detect_swings_with(&shaved.curtailed, swing_t[i], cfg.swing.mode),
                commands: shaved.commands,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;

    let actual: Vec<SwingEvent> = per_node.iter().flat_map(|n| n.actual.clone()).collect();
    let predicted: Vec<SwingEvent> = per_node.iter().flat_map(|n| n.predicted.clone()).collect();
    let after: Vec<SwingEvent> = per_node.iter().flat_map(|n| n.after.clone()).collect();
    let commands: Vec<&CurtailmentCommand> = per_node.iter().flat_map(|n| &n.commands).collect();

    let ts = |t: NaiveDateTime| t.format(TIMESTAMP_FORMAT).to_string();
    let event_rows = [(&actual, "baseline"), (&predicted, "baseline"), (&after, "curtailed")]
        .into_iter()
        .flat_map(|(evs, stage)| {
            evs.iter().map(move |e| EventRow {
                node_id: &e.node_id,
                timestamp: ts(e.timestamp),
                delta_p: e.delta_p,
                source: e.source,
                stage,
            })
        });
    write_csv_rows(cfg, &out.join(SWING_EVENTS_CSV), event_rows)?;
    write_csv_rows(
        cfg,
        &out.join(COMMANDS_CSV),
        commands.iter().map(|c| CommandRow {
            node_id: &c.node_id,
            timestamp: ts(c.timestamp),
            issued_at: ts(c.issued_at),
            cap: c.cap,
        }),
    )?;

    let grid_err = |source| PipelineError::Grid {
        node: "*".into(),
        source,
    };
    let h_actual = swing_histogram(&actual, days).map_err(grid_err)?;
    let h_pred = swing_histogram(&predicted, days).map_err(grid_err)?;
    #[derive(Serialize)]
    struct HistRow {
        bin: usize,
        time: String,
        actual: f64,
        predicted: f64,
    }
    write_csv_rows(
        cfg,
        &out.join(SWING_HISTOGRAM_CSV),
        (0..SAMPLES_PER_DAY).map(|i| HistRow {
            bin: i,
            time: format!("{:02}:{:02}", i / 4, (i % 4) * 15),
            actual: h_actual[i],
            predicted: h_pred[i],
        }),
    )?;
    let per_day = swing_reduction_report(&actual, &after);
    write_csv_rows(cfg, &out.join(REDUCTION_CSV), per_day.iter())?;

    let summary = GridSummary {
        config_hash: cfg.hash(),
        days,
        thresholds: series
            .iter()
            .zip(swing_t.iter().zip(&shave_t))
            .map(|(s, (&sw, &sh))| NodeThresholds {
                node: s.node_id().to_string(),
                swing_kw: sw,
                shave_kw: sh,
            })
            .collect(),
        actual_swings: actual.len(),
        predicted_swings: predicted.len(),
        swings_after_shaving: after.len(),
        commands: commands.len(),
        actual_peak_bin: peak_bin(&h_actual),
        predicted_peak_bin: peak_bin(&h_pred),
        per_day,
    };
    write_json(&out.join(GRID_SUMMARY_JSON), &summary)?;
    log::info!(
        "swings: {} actual, {} predicted, {} after shaving",
        summary.actual_swings,
        summary.predicted_swings,
        summary.swings_after_shaving
    );
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub rounds: usize,
    pub first_loss: f64,
    pub last_loss: f64,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(flatten)]
    pub eval: EvalReport,
    pub training: TrainingSummary,
}

fn score(records: &[ForecastRecord]) -> Result<FleetRmse, PipelineError> {
    let groups = group_by_node(records);
    Ok(fleet_rmse(groups.iter().map(|(n, r)| (n.as_str(), r.as_slice())))?)
}

/// Test-month RMSE per node and over the fleet, plus a training summary.
pub fn cmd_report(cfg: &ExperimentConfig, out: &Path) -> Result<Report, PipelineError> {
    let log = read_training_log(cfg, out)?;
    let rows = read_forecasts(cfg, out)?;
    let pick = |split: Split| -> Vec<ForecastRecord> {
        rows.iter().filter(|(s, _)| *s == split).map(|(_, r)| r.clone()).collect()
    };
    let test = pick(Split::Test);
    let in_sample = pick(Split::InSample);
    let fleet = score(&test)?;
    let groups = group_by_node(&test);
    let mean_load_kw = groups
        .iter()
        .map(|(_, r)| r.iter().map(|x| x.actual).sum::<f64>() / r.len() as f64)
        .sum::<f64>()
        / groups.len() as f64;

    let losses = log.losses();
    let report = Report {
        eval: EvalReport {
            config_hash: cfg.hash(),
            per_node: fleet.per_node,
            fleet_mean: fleet.fleet_mean,
            mean_load_kw,
            in_sample: if in_sample.is_empty() { None } else { Some(score(&in_sample)?) },
            references: reference_values(),
        },
        training: TrainingSummary {
            rounds: losses.len(),
            first_loss: losses.first().copied().unwrap_or(f64::NAN),
            last_loss: losses.last().copied().unwrap_or(f64::NAN),
            stop_reason: log.stop_reason,
        },
    };
    write_json(&out.join(REPORT_JSON), &report)?;
    log::info!(
        "fleet RMSE {:.3} kW over {} nodes (mean load {:.2} kW)",
        report.eval.fleet_mean,
        report.eval.per_node.len(),
        mean_load_kw
    );
    Ok(report)
}

/// Every stage in order; data generation is skipped when the config names
/// an input file.
pub fn run_all(cfg: &ExperimentConfig, out: &Path) -> Result<Report, PipelineError> {
    if cfg.paths.data.is_none() {
        cmd_gen_data(cfg, out)?;
    }
    cmd_train(cfg, out)?;
    cmd_forecast(cfg, out)?;
    cmd_grid_services(cfg, out)?;
    cmd_report(cfg, out)
}
