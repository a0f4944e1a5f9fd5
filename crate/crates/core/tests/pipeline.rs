use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use fedgrid::config::{ExperimentConfig, SeedStream};
use fedgrid::data::{base_profile, ingest_csv, CsvSchema};
use fedgrid::fl::StopReason;
use fedgrid::pipeline::*;

fn config(json: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(json).unwrap()
}

fn small() -> ExperimentConfig {
    config(r#"{"topology": {"num_nodes": 3}}"#)
}

#[test]
fn single_node_feeder_is_the_base_profile() {
    let cfg = config(r#"{"topology": {"num_nodes": 1, "days": 5}}"#);
    let dir = tempfile::tempdir().unwrap();
    let path = cmd_gen_data(&cfg, dir.path()).unwrap();
    let (series, report) = ingest_csv(&path, &CsvSchema::default()).unwrap();
    let base = base_profile(&cfg.topology.profile, 5, cfg.seed_for(SeedStream::Profile)).unwrap();
    assert!(report.rejects.is_empty());
    assert_eq!(series.len(), 1);
    assert_eq!(series[0].values(), base.values());
    assert_eq!(series[0].start(), base.start());
}

#[test]
fn generation_is_reproducible() {
    let cfg = config(r#"{"topology": {"num_nodes": 4, "days": 3}}"#);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let pa = cmd_gen_data(&cfg, a.path()).unwrap();
    let pb = cmd_gen_data(&cfg, b.path()).unwrap();
    assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
}

#[test]
fn infinite_tolerance_stops_after_one_round() {
    let cfg = config(r#"{"topology": {"num_nodes": 2}, "training": {"hyperparams": {"tolerance": "inf"}}}"#);
    let dir = tempfile::tempdir().unwrap();
    cmd_gen_data(&cfg, dir.path()).unwrap();
    let (g, log) = cmd_train(&cfg, dir.path()).unwrap();
    assert_eq!(g.round, 1);
    assert_eq!(log.rounds.len(), 1);
    assert_eq!(log.stop_reason, StopReason::ToleranceReached);
    let back = read_training_log(&cfg, dir.path()).unwrap();
    assert_eq!(back, log);
}

#[test]
fn default_training_respects_epoch_cap() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    cmd_gen_data(&cfg, dir.path()).unwrap();
    let (g, log) = cmd_train(&cfg, dir.path()).unwrap();
    assert!(log.rounds.len() <= 150);
    assert_eq!(read_model(&cfg, dir.path()).unwrap(), g.weights);
}

#[test]
fn artifacts_from_another_config_are_rejected() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    cmd_gen_data(&cfg, dir.path()).unwrap();
    let other = config(r#"{"seed": 7, "topology": {"num_nodes": 3}}"#);
    let err = cmd_train(&other, dir.path()).unwrap_err();
    assert!(matches!(err, PipelineError::HashMismatch { .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn model_with_wrong_input_count_is_incompatible() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    cmd_gen_data(&cfg, dir.path()).unwrap();
    cmd_train(&cfg, dir.path()).unwrap();

    let fewer = config(r#"{"topology": {"num_nodes": 3}, "lags": [15, 30, 45], "model": {"input_dim": 3}}"#);
    let path = dir.path().join(MODEL_JSON);
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replace(&cfg.hash(), &fewer.hash())).unwrap();
    let err = read_model(&fewer, dir.path()).unwrap_err();
    assert!(matches!(err, PipelineError::Incompatible(ref m) if m.contains('6') && m.contains('3')), "{err}");
    assert_eq!(err.exit_code(), 2);
}

fn data_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

/// Replaces every prediction in `forecasts.csv` with the actual reading.
fn perfect_forecasts(cfg: &ExperimentConfig, dir: &Path) {
    let path = dir.join(FORECAST_CSV);
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(&path).unwrap();
    let header = rdr.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "# config_hash={}", cfg.hash()).unwrap();
    let mut w = csv::Writer::from_writer(f);
    w.write_record(&header).unwrap();
    for r in rows {
        w.write_record([&r[0], &r[1], &r[3], &r[3], &r[4]]).unwrap();
    }
    w.flush().unwrap();
}

#[test]
fn perfect_forecast_predicts_every_actual_swing() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    cmd_gen_data(&cfg, dir.path()).unwrap();
    cmd_train(&cfg, dir.path()).unwrap();
    cmd_forecast(&cfg, dir.path()).unwrap();
    perfect_forecasts(&cfg, dir.path());
    let g = cmd_grid_services(&cfg, dir.path()).unwrap();
    assert!(g.actual_swings > 0);
    assert_eq!(g.predicted_swings, g.actual_swings);
    assert_eq!(g.actual_peak_bin, g.predicted_peak_bin);

    let events = data_rows(&dir.path().join(SWING_EVENTS_CSV));
    let pick = |source: &str| -> Vec<(String, String, String)> {
        events
            .iter()
            .filter(|r| &r[3] == source && &r[4] == "baseline")
            .map(|r| (r[0].to_string(), r[1].to_string(), r[2].to_string()))
            .collect()
    };
    assert_eq!(pick("actual"), pick("predicted"));
    assert!(g.per_day.iter().all(|d| d.after <= d.before));
}

#[test]
fn flat_load_gives_empty_swing_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("flat.csv");
    let mut f = std::fs::File::create(&data).unwrap();
    writeln!(f, "timestamp,node_id,power_kw").unwrap();
    let start = chrono::NaiveDate::from_ymd_opt(2021, 6, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    for node in ["a", "b"] {
        for i in 0..61 * 96 {
            let t = start + chrono::Duration::minutes(15 * i);
            writeln!(f, "{},{node},5", t.format("%Y-%m-%d %H:%M")).unwrap();
        }
    }
    drop(f);
    let json = format!(r#"{{"paths": {{"data": {:?}}}}}"#, data.to_str().unwrap());
    let cfg = config(&json);
    run_all(&cfg, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join(GRID_SUMMARY_JSON)).unwrap();
    let g: GridSummary = serde_json::from_str(&text).unwrap();
    assert_eq!((g.actual_swings, g.predicted_swings, g.swings_after_shaving), (0, 0, 0));
    assert!(g.per_day.is_empty());
    assert!(data_rows(&dir.path().join(SWING_EVENTS_CSV)).is_empty());
    assert!(data_rows(&dir.path().join(REDUCTION_CSV)).is_empty());
    let hist = data_rows(&dir.path().join(SWING_HISTOGRAM_CSV));
    assert_eq!(hist.len(), 96);
    assert!(hist.iter().all(|r| &r[2] == "0.0" && &r[3] == "0.0"));
}

#[test]
fn summaries_reconcile_with_event_files() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let report = run_all(&cfg, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join(GRID_SUMMARY_JSON)).unwrap();
    let g: GridSummary = serde_json::from_str(&text).unwrap();

    let mut counts: HashMap<(String, String), usize> = HashMap::new();
    for r in data_rows(&dir.path().join(SWING_EVENTS_CSV)) {
        *counts.entry((r[3].to_string(), r[4].to_string())).or_default() += 1;
    }
    let count = |s: &str, st: &str| counts.get(&(s.to_string(), st.to_string())).copied().unwrap_or(0);
    assert_eq!(count("actual", "baseline"), g.actual_swings);
    assert_eq!(count("predicted", "baseline"), g.predicted_swings);
    assert_eq!(count("actual", "curtailed"), g.swings_after_shaving);

    let hist = data_rows(&dir.path().join(SWING_HISTOGRAM_CSV));
    let total = |col: usize| hist.iter().map(|r| r[col].parse::<f64>().unwrap()).sum::<f64>() * g.days as f64;
    assert!((total(2) - g.actual_swings as f64).abs() < 1e-6);
    assert!((total(3) - g.predicted_swings as f64).abs() < 1e-6);

    let red = data_rows(&dir.path().join(REDUCTION_CSV));
    let before: usize = red.iter().map(|r| r[1].parse::<usize>().unwrap()).sum();
    let after: usize = red.iter().map(|r| r[2].parse::<usize>().unwrap()).sum();
    assert_eq!((before, after), (g.actual_swings, g.swings_after_shaving));
    assert_eq!(data_rows(&dir.path().join(COMMANDS_CSV)).len(), g.commands);

    let forecasts = read_forecasts(&cfg, dir.path()).unwrap();
    let test = forecasts.iter().filter(|(s, _)| *s == Split::Test).count();
    let in_sample = forecasts.len() - test;
    assert_eq!(test, 3 * 31 * 96);
    assert_eq!(in_sample, 3 * 96);
    assert_eq!(report.eval.per_node.len(), 3);
    assert!(report.eval.in_sample.is_some());
}

#[test]
fn every_artifact_carries_the_config_hash() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    run_all(&cfg, dir.path()).unwrap();
    let hash = cfg.hash();
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains(&hash), "{} lacks the hash", path.display());
    }
}

#[test]
fn one_day_horizon_gives_at_most_a_day_per_node() {
    let cfg = config(r#"{"topology": {"num_nodes": 2}, "forecast": {"horizon_days": 1}}"#);
    let dir = tempfile::tempdir().unwrap();
    cmd_gen_data(&cfg, dir.path()).unwrap();
    cmd_train(&cfg, dir.path()).unwrap();
    let rows = cmd_forecast(&cfg, dir.path()).unwrap();
    for node in ["0", "1"] {
        let n = rows.iter().filter(|(s, r)| *s == Split::Test && r.node_id == node).count();
        assert!(n <= 96 && n > 0);
    }
}
