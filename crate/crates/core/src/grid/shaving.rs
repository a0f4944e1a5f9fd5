use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::GridError;
use crate::data::{TimeSeries, STEP_MINUTES};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShavingMode {
    /// Cap consumption at the threshold.
    #[default]
    CapTo,
    /// Cap consumption at `forecast - threshold`.
    ReduceBy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShavingPolicy {
    pub mode: ShavingMode,
    /// How far ahead of the acted-on timestamp a command is issued.
    pub lead_minutes: i64,
}

impl Default for ShavingPolicy {
    fn default() -> Self {
        Self {
            mode: ShavingMode::CapTo,
            lead_minutes: 24 * 60,
        }
    }
}

/// Direct load-control signal for one node and timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurtailmentCommand {
    pub node_id: String,
    pub timestamp: NaiveDateTime,
    pub issued_at: NaiveDateTime,
    /// Maximum allowed consumption at `timestamp`, kW.
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShavingOutcome {
    pub curtailed: TimeSeries,
    pub commands: Vec<CurtailmentCommand>,
}

/// Issues a command for every timestamp whose forecast exceeds `threshold`
/// and applies it to `actual`, assuming the load honours the cap.
///
/// The forecast has to cover at least the command lead time; timestamps it
/// does not cover are left untouched.
pub fn peak_shave(
    actual: &TimeSeries,
    forecast: &TimeSeries,
    threshold: f64,
    policy: &ShavingPolicy,
) -> Result<ShavingOutcome, GridError> {
    if !threshold.is_finite() || (policy.mode == ShavingMode::CapTo && threshold <= 0.0) {
        return Err(GridError::InvalidPolicy(format!("threshold {threshold} cannot be a cap")));
    }
    let covered = forecast.len() as i64 * STEP_MINUTES;
    if covered < policy.lead_minutes {
        return Err(GridError::InsufficientHorizon {
            available_minutes: covered,
            required_minutes: policy.lead_minutes,
        });
    }
    let offset = forecast.start() - actual.start();
    if offset.num_seconds() % (STEP_MINUTES * 60) != 0 {
        return Err(GridError::Misaligned(format!(
            "forecast starts at {}, actual at {}",
            forecast.start(),
            actual.start()
        )));
    }
    let lead = Duration::minutes(policy.lead_minutes);

    let mut commands = Vec::new();
    let mut curtailed = actual.clone();
    let values = curtailed.values_mut();
    for (t, f) in forecast.readings() {
        if f <= threshold {
            continue;
        }
        let cap = match policy.mode {
            ShavingMode::CapTo => threshold,
            ShavingMode::ReduceBy => f - threshold,
        };
        if cap <= 0.0 {
            continue;
        }
        commands.push(CurtailmentCommand {
            node_id: actual.node_id().to_string(),
            timestamp: t,
            issued_at: t - lead,
            cap,
        });
        if let Some(i) = actual.index_of(t) {
            if let Some(v) = values[i].as_mut() {
                *v = v.min(cap);
            }
        }
    }
    Ok(ShavingOutcome {
        curtailed,
        commands,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{detect_swings, swing_reduction_report};
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn series(vals: Vec<f64>) -> TimeSeries {
        let start = NaiveDate::from_ymd_opt(2021, 6, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        TimeSeries::from_values("4", start, vals).unwrap()
    }

    #[test]
    fn quiet_forecast_issues_nothing() {
        let a = series(vec![20.0; 96]);
        let out = peak_shave(&a, &a, 31.0, &ShavingPolicy::default()).unwrap();
        assert!(out.commands.is_empty());
        assert_eq!(out.curtailed, a);
    }

    #[test]
    fn cap_semantics() {
        let mut av = vec![20.0; 96];
        let mut fv = vec![20.0; 96];
        av[50] = 34.0;
        fv[50] = 35.0;
        let (a, f) = (series(av), series(fv));
        let out = peak_shave(&a, &f, 31.0, &ShavingPolicy::default()).unwrap();
        assert_eq!(out.commands.len(), 1);
        let c = &out.commands[0];
        assert_eq!(c.cap, 31.0);
        assert_eq!(c.timestamp, a.timestamp(50));
        assert_eq!(c.issued_at, a.timestamp(50) - Duration::hours(24));
        assert_eq!(out.curtailed.value(50), Some(31.0));

        let by = ShavingPolicy {
            mode: ShavingMode::ReduceBy,
            ..Default::default()
        };
        let out = peak_shave(&a, &f, 31.0, &by).unwrap();
        assert_eq!(out.curtailed.value(50), Some(4.0));
    }

    #[test]
    fn short_forecast_is_rejected() {
        let a = series(vec![20.0; 96]);
        let f = series(vec![20.0; 95]);
        assert_eq!(
            peak_shave(&a, &f, 31.0, &ShavingPolicy::default()),
            Err(GridError::InsufficientHorizon {
                available_minutes: 95 * 15,
                required_minutes: 1440
            })
        );
    }

    proptest! {
        #[test]
        fn perfect_foresight_removes_exceedances(
            vals in proptest::collection::vec(0.1f64..50.0, 96..400),
            cap in 5.0f64..45.0,
            swing in 0.0f64..10.0,
        ) {
            let a = series(vals);
            let out = peak_shave(&a, &a, cap, &ShavingPolicy::default()).unwrap();
            for c in &out.commands {
                prop_assert!(out.curtailed.value_at(c.timestamp).unwrap() <= cap);
            }
            prop_assert!(out.curtailed.readings().all(|(_, v)| v <= cap));
            for (x, y) in out.curtailed.values().iter().zip(a.values()) {
                prop_assert!(x.unwrap() <= y.unwrap());
            }
            let before = detect_swings(&a, swing);
            let after = detect_swings(&out.curtailed, swing);
            for d in swing_reduction_report(&before, &after) {
                prop_assert!(d.after <= d.before, "{:?}", d);
            }
        }
    }
}
