use chrono::NaiveDate;
use proptest::prelude::*;

use fedgrid::nn::{
    apply_step, batch_loss, forward, gradient_step, init_weights, loss_and_step, Activation,
    GradientStep, LayerSpec, NnError, Sample,
};

fn spec() -> impl Strategy<Value = LayerSpec> {
    (1usize..8, proptest::collection::vec(1usize..8, 0..3), 0usize..3).prop_map(|(i, h, a)| {
        LayerSpec::new(i, h, [Activation::Relu, Activation::Tanh, Activation::Sigmoid][a])
    })
}

fn sample(features: Vec<f64>, target: f64) -> Sample {
    Sample {
        features,
        target,
        timestamp: NaiveDate::from_ymd_opt(2021, 6, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
    }
}

proptest! {
    #[test]
    fn wrong_input_length_is_an_error(s in spec(), seed in any::<u64>(), extra in 1usize..4, shorter in any::<bool>()) {
        let w = init_weights(&s, seed).unwrap();
        let n = if shorter { s.input_dim.saturating_sub(extra) } else { s.input_dim + extra };
        prop_assume!(n != s.input_dim);
        let x = vec![0.5; n];
        let is_shape = |e: Option<NnError>| matches!(e, Some(NnError::Shape { .. }));
        prop_assert!(is_shape(forward(&w, &x).err()));
        let batch = vec![sample(x, 1.0)];
        prop_assert!(is_shape(batch_loss(&w, &batch).err()));
        prop_assert!(is_shape(gradient_step(&w, &batch, 0.1).err()));
    }

    #[test]
    fn steps_from_other_architectures_are_rejected(a in spec(), b in spec(), seed in any::<u64>()) {
        prop_assume!(a.layer_dims() != b.layer_dims());
        let wa = init_weights(&a, seed).unwrap();
        let wb = init_weights(&b, seed).unwrap();
        prop_assert!(apply_step(&wa, &GradientStep::zeros_like(&wb)).is_err());
    }

    #[test]
    fn steps_are_pure_and_scale_with_rate(
        s in spec(),
        seed in any::<u64>(),
        rows in proptest::collection::vec((proptest::collection::vec(-2.0f64..2.0, 8), -3.0f64..3.0), 1..12),
    ) {
        let w = init_weights(&s, seed).unwrap();
        let batch: Vec<Sample> = rows.into_iter().map(|(x, y)| sample(x[..s.input_dim].to_vec(), y)).collect();
        let before = w.clone();
        let (loss, step) = loss_and_step(&w, &batch, 0.01).unwrap();
        prop_assert_eq!(&w, &before);
        prop_assert_eq!(loss, batch_loss(&w, &batch).unwrap());
        let doubled = gradient_step(&w, &batch, 0.02).unwrap();
        prop_assert_eq!(doubled.max_abs_diff(&step.scaled(2.0)), Some(0.0));
    }
}
