//! Synthetic feeder load: one base profile plus perturbed copies of it.

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike, Weekday};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DataError, TimeSeries, SAMPLES_PER_DAY};
use crate::rng::stream_rng;

/// Shape of the synthetic daily load curve.
///
/// A weekday is a flat floor plus three Gaussian bumps (morning, midday,
/// evening) in kW. Weekends are `weekend_scale * weekday + weekend_offset_kw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileParams {
    pub start: NaiveDateTime,
    pub floor_kw: f64,
    pub morning_peak_kw: f64,
    pub morning_hour: f64,
    pub morning_width_h: f64,
    pub midday_peak_kw: f64,
    pub midday_hour: f64,
    pub midday_width_h: f64,
    pub evening_peak_kw: f64,
    pub evening_hour: f64,
    pub evening_width_h: f64,
    pub weekend_scale: f64,
    pub weekend_offset_kw: f64,
    /// Relative std of i.i.d. noise on the base profile itself.
    pub noise: f64,
}

impl Default for ProfileParams {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2021, 6, 1)
                .expect("valid date")
                .and_hms_opt(0, 0, 0)
                .expect("valid time"),
            floor_kw: 12.0,
            morning_peak_kw: 9.0,
            morning_hour: 7.5,
            morning_width_h: 1.3,
            midday_peak_kw: 3.0,
            midday_hour: 13.0,
            midday_width_h: 3.0,
            evening_peak_kw: 22.0,
            evening_hour: 19.0,
            evening_width_h: 1.8,
            weekend_scale: 0.8,
            weekend_offset_kw: 3.0,
            noise: 0.01,
        }
    }
}

fn bump(hour: f64, center: f64, width: f64, height: f64) -> f64 {
    // circular distance so the curve is continuous across midnight
    let d = (hour - center).abs();
    let d = d.min(24.0 - d);
    height * (-0.5 * (d / width).powi(2)).exp()
}

impl ProfileParams {
    /// Noise-free load at `ts`.
    pub fn mean_load(&self, ts: NaiveDateTime) -> f64 {
        let hour = ts.hour() as f64 + ts.minute() as f64 / 60.0;
        let weekday = self.floor_kw
            + bump(hour, self.morning_hour, self.morning_width_h, self.morning_peak_kw)
            + bump(hour, self.midday_hour, self.midday_width_h, self.midday_peak_kw)
            + bump(hour, self.evening_hour, self.evening_width_h, self.evening_peak_kw);
        if matches!(ts.weekday(), Weekday::Sat | Weekday::Sun) {
            self.weekend_scale * weekday + self.weekend_offset_kw
        } else {
            weekday
        }
    }
}

/// [`base_profile`] with default shape parameters.
pub fn default_base_profile(days: usize, seed: u64) -> Result<TimeSeries, DataError> {
    base_profile(&ProfileParams::default(), days, seed)
}

/// `days` whole days of the synthetic base load, starting at `params.start`.
pub fn base_profile(params: &ProfileParams, days: usize, seed: u64) -> Result<TimeSeries, DataError> {
    if days == 0 {
        return Err(DataError::InvalidParameter("days must be >= 1".into()));
    }
    if !(params.noise >= 0.0 && params.noise.is_finite()) {
        return Err(DataError::InvalidParameter(format!(
            "profile noise must be >= 0, got {}",
            params.noise
        )));
    }
    let mut rng = stream_rng(seed, 0);
    let start = params.start;
    let step = super::series::step();
    let values = (0..days * SAMPLES_PER_DAY)
        .map(|i| {
            let ts = start + step * i as i32;
            let eps: f64 = StandardNormal.sample(&mut rng);
            params.mean_load(ts) * (1.0 + params.noise * eps)
        })
        .collect();
    TimeSeries::from_values("0", start, values)
}

/// Multiplicative perturbation `(1 + g[t])` applied to derived nodes.
///
/// `g` is a stationary AR(1) process per node: every `g[t]` is marginally
/// `Normal(0, sigma)` and nodes are mutually independent. `correlation` is the
/// lag-one autocorrelation; `0` gives i.i.d. draws per timestep, `1` a
/// constant per-node factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbation {
    pub sigma: f64,
    pub correlation: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            correlation: 0.99,
        }
    }
}

impl Perturbation {
    pub fn iid(sigma: f64) -> Self {
        Self {
            sigma,
            correlation: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(DataError::InvalidParameter(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return Err(DataError::InvalidParameter(format!(
                "correlation must lie in [0, 1], got {}",
                self.correlation
            )));
        }
        Ok(())
    }
}

/// Floor for perturbed loads, as a fraction of the base reading.
const CLIP_FLOOR: f64 = 0.1;

/// `num_nodes` series: node 0 is `base`, node `n` is `base * (1 + g_n)`.
///
/// Each node draws from its own random stream, so node `n` is the same
/// regardless of `num_nodes`.
pub fn generate_feeder(
    base: &TimeSeries,
    num_nodes: usize,
    perturbation: Perturbation,
    seed: u64,
) -> Result<Vec<TimeSeries>, DataError> {
    if num_nodes == 0 {
        return Err(DataError::InvalidParameter("num_nodes must be >= 1".into()));
    }
    perturbation.validate()?;
    let Perturbation { sigma, correlation } = perturbation;
    let innovation = (1.0 - correlation * correlation).sqrt();

    (0..num_nodes)
        .into_par_iter()
        .map(|n| {
            if n == 0 {
                return Ok(base.clone().with_node_id("0"));
            }
            let mut rng = stream_rng(seed, n as u64);
            let mut g = 0.0;
            let values = base
                .values()
                .iter()
                .enumerate()
                .map(|(t, v)| {
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    g = if t == 0 {
                        sigma * eps
                    } else {
                        correlation * g + innovation * sigma * eps
                    };
                    v.map(|b| {
                        let x = b * (1.0 + g);
                        if b > 0.0 {
                            x.max(CLIP_FLOOR * b)
                        } else {
                            x
                        }
                    })
                })
                .collect();
            TimeSeries::new(n.to_string(), base.start(), values)
        })
        .collect()
}
