//! Forward pass, mean-squared loss, backpropagation and the finite-difference
//! oracle used to check it.

use super::{GradientStep, ModelWeights, NnError, Sample};

/// Pre-activations and activations of every layer for one input.
struct Trace {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

fn check_input(w: &ModelWeights, x: &[f64]) -> Result<(), NnError> {
    let expected = w.spec().input_dim;
    if x.len() != expected {
        return Err(NnError::Shape {
            what: "feature vector",
            expected,
            found: x.len(),
        });
    }
    Ok(())
}

fn trace(w: &ModelWeights, x: &[f64]) -> Trace {
    let act = w.spec().activation;
    let n_layers = w.layers().len();
    let mut acts = Vec::with_capacity(n_layers + 1);
    let mut pre = Vec::with_capacity(n_layers);
    acts.push(x.to_vec());
    for (l, layer) in w.layers().iter().enumerate() {
        let input = &acts[l];
        let mut z = layer.bias().to_vec();
        for (r, zr) in z.iter_mut().enumerate() {
            let row = &layer.weights()[r * layer.cols()..(r + 1) * layer.cols()];
            *zr += row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
        }
        let out = if l + 1 == n_layers {
            z.clone()
        } else {
            z.iter().map(|&v| act.apply(v)).collect()
        };
        pre.push(z);
        acts.push(out);
    }
    Trace { acts, pre }
}

/// Scalar prediction for one feature vector.
pub fn forward(w: &ModelWeights, x: &[f64]) -> Result<f64, NnError> {
    check_input(w, x)?;
    let t = trace(w, x);
    Ok(t.acts.last().expect("at least one layer")[0])
}

/// `(1/n) * sum (Y_i - y_i)^2` over the batch.
pub fn batch_loss(w: &ModelWeights, batch: &[Sample]) -> Result<f64, NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let mut sum = 0.0;
    for s in batch {
        let y = forward(w, &s.features)?;
        let e = s.target - y;
        sum += e * e;
    }
    Ok(sum / batch.len() as f64)
}

/// Batch loss and `dL/dw` in one pass.
pub fn loss_and_gradient(
    w: &ModelWeights,
    batch: &[Sample],
) -> Result<(f64, GradientStep), NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let n = batch.len() as f64;
    let act = w.spec().activation;
    let mut grad = GradientStep::zeros_like(w);
    let mut sum = 0.0;

    for s in batch {
        check_input(w, &s.features)?;
        let t = trace(w, &s.features);
        let y = t.acts.last().expect("at least one layer")[0];
        let e = s.target - y;
        sum += e * e;

        // dL/dz for the (linear) output layer.
        let mut delta = vec![2.0 * (y - s.target) / n];
        for l in (0..w.layers().len()).rev() {
            let layer = &w.layers()[l];
            let input = &t.acts[l];
            let g = &mut grad.layers_mut()[l];
            for (r, &d) in delta.iter().enumerate() {
                let row = &mut g.weights_mut()[r * layer.cols()..(r + 1) * layer.cols()];
                for (gw, &a) in row.iter_mut().zip(input) {
                    *gw += d * a;
                }
                g.bias_mut()[r] += d;
            }
            if l == 0 {
                break;
            }
            let below = &t.pre[l - 1];
            let mut next = vec![0.0; layer.cols()];
            for (r, &d) in delta.iter().enumerate() {
                for (c, nc) in next.iter_mut().enumerate() {
                    *nc += layer.weight(r, c) * d;
                }
            }
            for (nc, &z) in next.iter_mut().zip(below) {
                *nc *= act.derivative(z);
            }
            delta = next;
        }
    }
    Ok((sum / n, grad))
}

fn check_rate(eta: f64) -> Result<(), NnError> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(NnError::InvalidParameter(format!(
            "learning rate must be positive and finite, got {eta}"
        )));
    }
    Ok(())
}

/// `delta = -eta * grad L` by analytic backpropagation.
pub fn gradient_step(
    w: &ModelWeights,
    batch: &[Sample],
    eta: f64,
) -> Result<GradientStep, NnError> {
    Ok(loss_and_step(w, batch, eta)?.1)
}

/// Like [`gradient_step`] but also returns the batch loss at `w`.
pub fn loss_and_step(
    w: &ModelWeights,
    batch: &[Sample],
    eta: f64,
) -> Result<(f64, GradientStep), NnError> {
    check_rate(eta)?;
    let (loss, grad) = loss_and_gradient(w, batch)?;
    Ok((loss, grad.scaled(-eta)))
}

/// Central finite differences of [`batch_loss`], one coordinate at a time.
///
/// Returns raw `dL/dw`, not a scaled step.
pub fn numerical_gradient(
    w: &ModelWeights,
    batch: &[Sample],
    h: f64,
) -> Result<GradientStep, NnError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(NnError::InvalidParameter(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    // Surface shape/empty errors before perturbing anything.
    batch_loss(w, batch)?;

    let mut grad = GradientStep::zeros_like(w);
    let mut probe = w.clone();
    for l in 0..w.layers().len() {
        let n_vals = w.layers()[l].weights().len() + w.layers()[l].bias().len();
        for k in 0..n_vals {
            let orig = nth_value(&w.layers()[l], k);
            set_nth(&mut probe.layers_mut()[l], k, orig + h);
            let plus = batch_loss(&probe, batch)?;
            set_nth(&mut probe.layers_mut()[l], k, orig - h);
            let minus = batch_loss(&probe, batch)?;
            set_nth(&mut probe.layers_mut()[l], k, orig);
            set_nth(&mut grad.layers_mut()[l], k, (plus - minus) / (2.0 * h));
        }
    }
    Ok(grad)
}

fn nth_value(layer: &super::DenseLayer, k: usize) -> f64 {
    let nw = layer.weights().len();
    if k < nw {
        layer.weights()[k]
    } else {
        layer.bias()[k - nw]
    }
}

fn set_nth(layer: &mut super::DenseLayer, k: usize, v: f64) {
    let nw = layer.weights().len();
    if k < nw {
        layer.weights_mut()[k] = v;
    } else {
        layer.bias_mut()[k - nw] = v;
    }
}
