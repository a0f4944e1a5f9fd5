use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::codec::{decode_message, encode_message, Message};
use super::{local_round, Federate, FlError, GradientReport, WeightBroadcast};
use crate::nn::{GradientStep, Hyperparams, ModelWeights};

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModel {
    pub weights: ModelWeights,
    pub round: u64,
}

impl GlobalModel {
    pub fn new(weights: ModelWeights) -> Self {
        Self { weights, round: 0 }
    }

    pub fn broadcast(&self) -> WeightBroadcast {
        WeightBroadcast {
            round: self.round,
            weights: self.weights.clone(),
        }
    }
}

/// Per-federate coefficients applied to reported steps, indexed by federate.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationWeights {
    alpha: Vec<f64>,
}

impl AggregationWeights {
    pub fn uniform(n: usize) -> Self {
        Self {
            alpha: vec![1.0 / n as f64; n],
        }
    }

    pub fn new(alpha: Vec<f64>) -> Result<Self, FlError> {
        if alpha.is_empty() {
            return Err(FlError::EmptyFederation);
        }
        if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(FlError::InvalidAggregation(format!(
                "coefficients must be finite and >= 0, got {a}"
            )));
        }
        if alpha.iter().sum::<f64>() <= 0.0 {
            return Err(FlError::InvalidAggregation("coefficients sum to zero".into()));
        }
        Ok(Self { alpha })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alpha
    }

    /// `sum(alpha_i * x_i) / sum(alpha_i)`, summed in index order.
    pub fn weighted_mean(&self, xs: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, x) in self.alpha.iter().zip(xs) {
            num += a * x;
            den += a;
        }
        num / den
    }
}

/// `w + sum(alpha_i * delta_i)` over one complete round.
///
/// Reports may arrive in any order; they are summed by ascending federate
/// index so the result does not depend on arrival order.
pub fn aggregate(
    g: &GlobalModel,
    reports: &[GradientReport],
    alpha: &AggregationWeights,
) -> Result<GlobalModel, FlError> {
    let n = alpha.len();
    let mut slots: Vec<Option<&GradientReport>> = vec![None; n];
    for r in reports {
        if r.round != g.round {
            return Err(FlError::Desync {
                federate: Some(r.federate.index),
                expected: g.round,
                found: r.round,
            });
        }
        let i = r.federate.index;
        if i >= n {
            return Err(FlError::UnknownFederate { index: i });
        }
        if slots[i].replace(r).is_some() {
            return Err(FlError::DuplicateReport {
                round: g.round,
                federate: i,
            });
        }
    }
    let missing: Vec<usize> = (0..n).filter(|&i| slots[i].is_none()).collect();
    if !missing.is_empty() {
        return Err(FlError::IncompleteRound {
            round: g.round,
            missing,
        });
    }

    let mut total = GradientStep::zeros_like(&g.weights);
    for (r, &a) in slots.iter().flatten().zip(alpha.as_slice()) {
        total.add_scaled(a, &r.step)?;
    }
    Ok(GlobalModel {
        weights: crate::nn::apply_step(&g.weights, &total)?,
        round: g.round + 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ToleranceReached,
    EpochCapReached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    /// Alpha-weighted mean of the federate losses.
    pub loss: f64,
    pub federate_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub rounds: Vec<RoundRecord>,
    pub stop_reason: StopReason,
}

impl TrainingLog {
    pub fn losses(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.loss).collect()
    }
}

/// Runs synchronous rounds until the mean loss drops below the tolerance or
/// `max_epochs` rounds have completed.
///
/// Local rounds run in parallel; the result is identical for any thread count.
pub fn train(
    g: GlobalModel,
    federates: &mut [Federate],
    h: &Hyperparams,
    alpha: &AggregationWeights,
) -> Result<(GlobalModel, TrainingLog), FlError> {
    run(g, federates, h, alpha, None)
}

/// Like [`train`], but every broadcast and report is encoded, handed to `tap`
/// and decoded again before use, as if it had crossed a wire.
pub fn train_observed(
    g: GlobalModel,
    federates: &mut [Federate],
    h: &Hyperparams,
    alpha: &AggregationWeights,
    tap: &mut dyn FnMut(&[u8]),
) -> Result<(GlobalModel, TrainingLog), FlError> {
    run(g, federates, h, alpha, Some(tap))
}

type Tap<'a> = Option<&'a mut dyn FnMut(&[u8])>;

fn through_wire(m: Message, tap: &mut Tap<'_>) -> Result<Message, FlError> {
    match tap {
        None => Ok(m),
        Some(tap) => {
            let bytes = encode_message(&m)?;
            tap(&bytes);
            Ok(decode_message(&bytes)?)
        }
    }
}

fn run(
    mut g: GlobalModel,
    federates: &mut [Federate],
    h: &Hyperparams,
    alpha: &AggregationWeights,
    mut tap: Tap<'_>,
) -> Result<(GlobalModel, TrainingLog), FlError> {
    h.validate()?;
    if federates.is_empty() {
        return Err(FlError::EmptyFederation);
    }
    if alpha.len() != federates.len() {
        return Err(FlError::InvalidAggregation(format!(
            "{} coefficients for {} federates",
            alpha.len(),
            federates.len()
        )));
    }
    for (i, f) in federates.iter().enumerate() {
        if f.id().index != i {
            return Err(FlError::InvalidAggregation(format!(
                "federate at position {i} has index {}",
                f.id().index
            )));
        }
    }

    let mut rounds = Vec::new();
    let stop_reason = loop {
        let Message::Broadcast(b) = through_wire(Message::Broadcast(g.broadcast()), &mut tap)? else {
            unreachable!("broadcast decodes as broadcast");
        };
        let reports: Vec<GradientReport> = federates
            .par_iter_mut()
            .map(|f| local_round(f, &b, h.learning_rate))
            .collect::<Result<_, _>>()?;

        let mut received = Vec::with_capacity(reports.len());
        for r in reports {
            if !(r.loss.is_finite() && r.step.is_finite()) {
                return Err(FlError::Divergence {
                    round: g.round,
                    federate: Some(r.federate.index),
                });
            }
            match through_wire(Message::Report(r), &mut tap)? {
                Message::Report(r) => received.push(r),
                Message::Broadcast(_) => unreachable!("report decodes as report"),
            }
        }

        let federate_losses: Vec<f64> = received.iter().map(|r| r.loss).collect();
        let loss = alpha.weighted_mean(&federate_losses);
        let round = g.round;
        g = aggregate(&g, &received, alpha)?;
        if !(loss.is_finite() && g.weights.is_finite()) {
            return Err(FlError::Divergence { round, federate: None });
        }
        log::debug!("round {round}: loss {loss:.6}");
        rounds.push(RoundRecord {
            round,
            loss,
            federate_losses,
        });

        if loss < h.tolerance {
            break StopReason::ToleranceReached;
        }
        if rounds.len() >= h.max_epochs {
            break StopReason::EpochCapReached;
        }
    };
    log::info!(
        "training stopped after {} rounds ({stop_reason:?})",
        rounds.len()
    );
    Ok((g, TrainingLog { rounds, stop_reason }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fl::FederateId;
    use crate::nn::{apply_step, init_weights, DenseLayer, LayerSpec};

    fn spec() -> LayerSpec {
        LayerSpec::new(2, vec![3], Default::default())
    }

    fn report(index: usize, round: u64, fill: f64) -> GradientReport {
        let w = ModelWeights::zeros(&spec()).unwrap();
        let layers = w
            .layers()
            .iter()
            .map(|l| {
                DenseLayer::from_parts(
                    l.rows(),
                    l.cols(),
                    vec![fill; l.rows() * l.cols()],
                    vec![fill; l.rows()],
                )
                .unwrap()
            })
            .collect();
        GradientReport {
            round,
            federate: FederateId::home(index),
            step: GradientStep::from_layers(layers),
            loss: 1.0,
        }
    }

    #[test]
    fn single_federate_reduces_to_apply_step() {
        let g = GlobalModel::new(init_weights(&spec(), 3).unwrap());
        let r = report(0, 0, 0.25);
        let next = aggregate(&g, std::slice::from_ref(&r), &AggregationWeights::uniform(1)).unwrap();
        assert_eq!(next.weights, apply_step(&g.weights, &r.step).unwrap());
        assert_eq!(next.round, 1);
    }

    #[test]
    fn zero_reports_leave_weights_and_advance_round() {
        let g = GlobalModel::new(init_weights(&spec(), 3).unwrap());
        let rs: Vec<_> = (0..3).map(|i| report(i, 0, 0.0)).collect();
        let next = aggregate(&g, &rs, &AggregationWeights::uniform(3)).unwrap();
        assert_eq!(next.weights, g.weights);
        assert_eq!(next.round, 1);
    }

    #[test]
    fn identical_steps_average_to_one_step() {
        let g = GlobalModel::new(init_weights(&spec(), 3).unwrap());
        for k in [2usize, 5, 10] {
            let rs: Vec<_> = (0..k).map(|i| report(i, 0, 0.3)).collect();
            let next = aggregate(&g, &rs, &AggregationWeights::uniform(k)).unwrap();
            let single = apply_step(&g.weights, &rs[0].step).unwrap();
            assert!(next.weights.max_abs_diff(&single).unwrap() < 1e-12);
        }
    }

    #[test]
    fn arrival_order_does_not_matter() {
        let g = GlobalModel::new(init_weights(&spec(), 3).unwrap());
        let rs: Vec<_> = (0..4).map(|i| report(i, 0, 0.1 * (i as f64 + 1.0).powi(3))).collect();
        let mut rev = rs.clone();
        rev.reverse();
        let a = AggregationWeights::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(aggregate(&g, &rs, &a).unwrap(), aggregate(&g, &rev, &a).unwrap());
    }

    #[test]
    fn round_errors() {
        let g = GlobalModel::new(init_weights(&spec(), 3).unwrap());
        let a = AggregationWeights::uniform(3);
        let err = aggregate(&g, &[report(0, 0, 0.0), report(2, 0, 0.0)], &a).unwrap_err();
        assert_eq!(err, FlError::IncompleteRound { round: 0, missing: vec![1] });
        let err = aggregate(
            &g,
            &[report(0, 0, 0.0), report(1, 0, 0.0), report(1, 0, 0.0)],
            &a,
        )
        .unwrap_err();
        assert_eq!(err, FlError::DuplicateReport { round: 0, federate: 1 });
        let err = aggregate(&g, &[report(0, 1, 0.0)], &a).unwrap_err();
        assert!(matches!(err, FlError::Desync { expected: 0, found: 1, .. }));
        assert!(matches!(
            aggregate(&g, &[report(5, 0, 0.0)], &a),
            Err(FlError::UnknownFederate { index: 5 })
        ));
    }

    #[test]
    fn coefficient_validation() {
        assert!(AggregationWeights::new(vec![]).is_err());
        assert!(AggregationWeights::new(vec![-0.1, 1.0]).is_err());
        assert!(AggregationWeights::new(vec![0.0, 0.0]).is_err());
        assert!(AggregationWeights::new(vec![f64::NAN]).is_err());
        let a = AggregationWeights::new(vec![1.0, 3.0]).unwrap();
        assert_eq!(a.weighted_mean(&[2.0, 6.0]), 5.0);
    }
}
