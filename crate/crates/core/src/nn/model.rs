//! Parameter containers for the forecaster.
//!
//! Every dense layer stores its weight matrix row-major with shape
//! `(out_dim, in_dim)` next to its bias vector. `ModelWeights` and
//! `GradientStep` share that layout so steps can be added elementwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, NnError};

/// Architecture of the fully-connected forecaster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl Default for LayerSpec {
    /// Six lagged inputs, two hidden layers of 20, one scalar output.
    fn default() -> Self {
        Self {
            input_dim: 6,
            hidden_dims: vec![20, 20],
            output_dim: 1,
            activation: Activation::Relu,
        }
    }
}

impl LayerSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, activation: Activation) -> Self {
        Self {
            input_dim,
            hidden_dims,
            output_dim: 1,
            activation,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_dim == 0 {
            return Err(NnError::InvalidSpec("input_dim must be >= 1".into()));
        }
        if self.output_dim != 1 {
            return Err(NnError::InvalidSpec(format!(
                "output_dim must be 1 (scalar forecast), got {}",
                self.output_dim
            )));
        }
        if let Some(pos) = self.hidden_dims.iter().position(|&d| d == 0) {
            return Err(NnError::InvalidSpec(format!("hidden layer {pos} has zero width")));
        }
        Ok(())
    }

    /// `(in_dim, out_dim)` of every dense layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    pub fn num_params(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// One dense layer's parameters (or a congruent gradient).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    pub fn from_parts(
        rows: usize,
        cols: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, NnError> {
        if weights.len() != rows * cols {
            return Err(NnError::Shape {
                what: "weight matrix",
                expected: rows * cols,
                found: weights.len(),
            });
        }
        if bias.len() != rows {
            return Err(NnError::Shape {
                what: "bias vector",
                expected: rows,
                found: bias.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            weights,
            bias,
        })
    }

    /// Output dimension.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Input dimension.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major `(rows, cols)` weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub(crate) fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.cols + col]
    }

    pub(crate) fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().chain(self.bias.iter()).copied()
    }

    fn same_shape(&self, other: &DenseLayer) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

fn check_congruent(a: &[DenseLayer], b: &[DenseLayer]) -> Result<(), NnError> {
    if a.len() != b.len() {
        return Err(NnError::Shape {
            what: "layer count",
            expected: a.len(),
            found: b.len(),
        });
    }
    for (la, lb) in a.iter().zip(b) {
        if !la.same_shape(lb) {
            return Err(NnError::Shape {
                what: "layer size",
                expected: la.rows * la.cols,
                found: lb.rows * lb.cols,
            });
        }
    }
    Ok(())
}

/// Forecaster parameters together with the architecture they instantiate.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    spec: LayerSpec,
    layers: Vec<DenseLayer>,
}

impl ModelWeights {
    pub fn zeros(spec: &LayerSpec) -> Result<Self, NnError> {
        spec.validate()?;
        let layers = spec
            .layer_dims()
            .into_iter()
            .map(|(i, o)| DenseLayer::zeros(o, i))
            .collect();
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    /// Wraps explicit layers, checking that they chain according to `spec`
    /// and hold only finite values.
    pub fn from_layers(spec: &LayerSpec, layers: Vec<DenseLayer>) -> Result<Self, NnError> {
        spec.validate()?;
        let dims = spec.layer_dims();
        if dims.len() != layers.len() {
            return Err(NnError::Shape {
                what: "layer count",
                expected: dims.len(),
                found: layers.len(),
            });
        }
        for ((i, o), layer) in dims.iter().zip(&layers) {
            if layer.cols != *i {
                return Err(NnError::Shape {
                    what: "layer input dim",
                    expected: *i,
                    found: layer.cols,
                });
            }
            if layer.rows != *o {
                return Err(NnError::Shape {
                    what: "layer output dim",
                    expected: *o,
                    found: layer.rows,
                });
            }
        }
        let w = Self {
            spec: spec.clone(),
            layers,
        };
        if !w.is_finite() {
            return Err(NnError::NonFinite("model weights".into()));
        }
        Ok(w)
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.values().all(f64::is_finite))
    }

    /// Largest absolute elementwise difference; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &ModelWeights) -> Option<f64> {
        check_congruent(&self.layers, &other.layers).ok()?;
        Some(
            self.layers
                .iter()
                .zip(&other.layers)
                .flat_map(|(a, b)| a.values().zip(b.values()))
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        )
    }
}

/// A per-layer array congruent with [`ModelWeights`].
///
/// Produced by `gradient_step` it holds `-eta * grad L`. `numerical_gradient`
/// reuses the layout to return the raw `dL/dw`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientStep {
    layers: Vec<DenseLayer>,
}

impl GradientStep {
    pub fn zeros_like(w: &ModelWeights) -> Self {
        Self {
            layers: w
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.rows, l.cols))
                .collect(),
        }
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(DenseLayer::values)
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|v| v == 0.0)
    }

    pub fn is_congruent_with(&self, w: &ModelWeights) -> bool {
        check_congruent(&w.layers, &self.layers).is_ok()
    }

    /// Multiplies every component by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for v in out.layers.iter_mut().flat_map(DenseLayer::values_mut) {
            *v *= factor;
        }
        out
    }

    /// `self += alpha * other`, elementwise.
    pub fn add_scaled(&mut self, alpha: f64, other: &GradientStep) -> Result<(), NnError> {
        check_congruent(&self.layers, &other.layers)?;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.values_mut().zip(b.values()) {
                *x += alpha * y;
            }
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &GradientStep) -> Option<f64> {
        check_congruent(&self.layers, &other.layers).ok()?;
        Some(
            self.values()
                .zip(other.values())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        )
    }
}

/// Draws weights uniformly in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`; biases are zero.
pub fn init_weights(spec: &LayerSpec, seed: u64) -> Result<ModelWeights, NnError> {
    let mut w = ModelWeights::zeros(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut w.layers {
        let bound = 1.0 / (layer.cols as f64).sqrt();
        for v in &mut layer.weights {
            *v = rng.random_range(-bound..=bound);
        }
    }
    Ok(w)
}

/// Elementwise `w + step`. The input is left untouched.
pub fn apply_step(w: &ModelWeights, step: &GradientStep) -> Result<ModelWeights, NnError> {
    check_congruent(&w.layers, &step.layers)?;
    let mut out = w.clone();
    for (layer, d) in out.layers.iter_mut().zip(&step.layers) {
        for (x, y) in layer.values_mut().zip(d.values()) {
            *x += y;
        }
    }
    Ok(out)
}
