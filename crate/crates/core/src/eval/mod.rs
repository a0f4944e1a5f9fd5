//! Forecast scoring in kW and forecast-vs-actual records.

mod forecast;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::node_order;

pub use forecast::{one_step_forecast, records_to_series};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no forecast records")]
    Empty,
    #[error("node {0} has no forecast records")]
    EmptyNode(String),
    #[error("no nodes to score")]
    NoNodes,
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub node_id: String,
    pub timestamp: NaiveDateTime,
    pub predicted: f64,
    pub actual: f64,
}

/// Root-mean-square error of `predicted` against `actual`, in kW.
pub fn rmse(records: &[ForecastRecord]) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let se: f64 = records.iter().map(|r| (r.actual - r.predicted).powi(2)).sum();
    Ok((se / records.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRmse {
    pub node: String,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetRmse {
    pub per_node: Vec<NodeRmse>,
    /// Unweighted mean of the per-node values.
    pub fleet_mean: f64,
}

/// Per-node RMSE and their plain average.
pub fn fleet_rmse<'a, I>(nodes: I) -> Result<FleetRmse, EvalError>
where
    I: IntoIterator<Item = (&'a str, &'a [ForecastRecord])>,
{
    let mut per_node = Vec::new();
    for (node, records) in nodes {
        let r = rmse(records).map_err(|_| EvalError::EmptyNode(node.to_string()))?;
        per_node.push(NodeRmse {
            node: node.to_string(),
            rmse: r,
        });
    }
    if per_node.is_empty() {
        return Err(EvalError::NoNodes);
    }
    let fleet_mean = per_node.iter().map(|n| n.rmse).sum::<f64>() / per_node.len() as f64;
    Ok(FleetRmse {
        per_node,
        fleet_mean,
    })
}

/// Splits records by node, nodes in natural order, records in time order.
pub fn group_by_node(records: &[ForecastRecord]) -> Vec<(String, Vec<ForecastRecord>)> {
    let mut groups: Vec<(String, Vec<ForecastRecord>)> = Vec::new();
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| node_order(&a.node_id, &b.node_id).then(a.timestamp.cmp(&b.timestamp)));
    for r in sorted {
        match groups.last_mut() {
            Some((node, v)) if *node == r.node_id => v.push(r),
            _ => groups.push((r.node_id.clone(), vec![r])),
        }
    }
    groups
}

/// Published figures kept next to our own numbers for comparison only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValue {
    pub label: String,
    pub rmse_kw: f64,
}

pub fn reference_values() -> Vec<ReferenceValue> {
    vec![
        ReferenceValue {
            label: "published fleet RMSE, synthetic 1000-node feeder".into(),
            rmse_kw: 1.642,
        },
        ReferenceValue {
            label: "published RMSE, Pecan Street households".into(),
            rmse_kw: 1.98,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub per_node: Vec<NodeRmse>,
    pub fleet_mean: f64,
    pub mean_load_kw: f64,
    /// Scores on data the model was trained on; never mixed into `fleet_mean`.
    pub in_sample: Option<FleetRmse>,
    pub references: Vec<ReferenceValue>,
}
