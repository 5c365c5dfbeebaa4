//! Fully connected binary classifier trained with Adam on BCE loss.
//!
//! Architecture: `k -> 128 -> 64 -> 64 -> 32 -> 32 -> 2 -> 1`, ReLU on the
//! six hidden layers, sigmoid on the output unit. Inverted dropout sits on
//! the output of the fourth hidden layer. All arithmetic is 64-bit.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gower::GowerMatrix;
use crate::seed::rng_from;

pub const HIDDEN_LAYERS: [usize; 6] = [128, 64, 64, 32, 32, 2];
pub const LAYER_COUNT: usize = HIDDEN_LAYERS.len() + 1;
pub const DROPOUT_RATE: f64 = 0.15;
/// Index of the hidden layer whose output is dropped out.
pub const DROPOUT_LAYER: usize = 3;
pub const SCORE_THRESHOLD: f64 = 0.5;
pub const SCORE_EPS: f64 = 1e-12;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `(fan_in, fan_out)`
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

/// Weights and biases of every layer. Also used for gradients and Adam
/// moments, which share the shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    layers: Vec<Layer>,
}

pub type Gradients = ModelParameters;

/// `(fan_in, fan_out)` of each layer for input width `k`.
pub fn layer_dims(input_dim: usize) -> Vec<(usize, usize)> {
    let mut dims = Vec::with_capacity(LAYER_COUNT);
    let mut prev = input_dim;
    for &h in HIDDEN_LAYERS.iter().chain(std::iter::once(&1)) {
        dims.push((prev, h));
        prev = h;
    }
    dims
}

impl ModelParameters {
    pub fn zeros(input_dim: usize) -> Self {
        let layers = layer_dims(input_dim)
            .into_iter()
            .map(|(i, o)| Layer {
                weights: Array2::zeros((i, o)),
                biases: Array1::zeros(o),
            })
            .collect();
        Self { layers }
    }

    /// Validates the layer chain against the fixed architecture.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let input_dim = layers
            .first()
            .map(|l| l.weights.nrows())
            .ok_or_else(|| Error::Shape("model has no layers".into()))?;
        let expected = layer_dims(input_dim);
        if layers.len() != expected.len() {
            return Err(Error::Shape(format!(
                "expected {} layers, got {}",
                expected.len(),
                layers.len()
            )));
        }
        for (i, (layer, &(fi, fo))) in layers.iter().zip(&expected).enumerate() {
            if layer.weights.dim() != (fi, fo) || layer.biases.len() != fo {
                return Err(Error::Shape(format!(
                    "layer {i} has weights {:?} and {} biases, expected ({fi}, {fo})",
                    layer.weights.dim(),
                    layer.biases.len()
                )));
            }
        }
        let params = Self { layers };
        if !params.is_finite() {
            return Err(Error::Data("model contains non-finite values".into()));
        }
        Ok(params)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.dim() == b.weights.dim() && a.biases.len() == b.biases.len())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// All values, layer by layer, weights (row-major) before biases.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
    }

    fn zip_apply(&mut self, other: &Self, f: impl Fn(&mut f64, f64) + Copy) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            Zip::from(&mut a.weights).and(&b.weights).for_each(|x, &y| f(x, y));
            Zip::from(&mut a.biases).and(&b.biases).for_each(|x, &y| f(x, y));
        }
    }

    /// `self += weight * other`
    pub fn add_scaled(&mut self, other: &Self, weight: f64) -> Result<()> {
        self.check_shape(other)?;
        self.zip_apply(other, |x, y| *x += weight * y);
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let mut out = self.clone();
        out.zip_apply(other, |x, y| *x += y);
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let mut out = self.clone();
        out.zip_apply(other, |x, y| *x -= y);
        Ok(out)
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for l in &mut out.layers {
            l.weights.mapv_inplace(|x| x * factor);
            l.biases.mapv_inplace(|x| x * factor);
        }
        out
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape("parameter shapes differ".into()))
        }
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_model(input_dim: usize, rng_seed: u64) -> Result<ModelParameters> {
    if input_dim == 0 {
        return Err(Error::InvalidArgument("input width must be at least 1".into()));
    }
    let mut rng = rng_from(rng_seed);
    let mut params = ModelParameters::zeros(input_dim);
    for layer in &mut params.layers {
        let (fan_in, fan_out) = layer.weights.dim();
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        layer
            .weights
            .mapv_inplace(|_| rng.gen_range(-bound..bound));
    }
    Ok(params)
}

/// Per-row multipliers applied to the dropout layer's activations.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    multipliers: Array2<f64>,
}

impl DropoutMask {
    fn width() -> usize {
        HIDDEN_LAYERS[DROPOUT_LAYER]
    }

    /// Keeps each unit with probability `1 - rate`, scaling kept units by
    /// `1 / (1 - rate)`.
    pub fn sample(rows: usize, rate: f64, rng: &mut impl Rng) -> Self {
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        let multipliers = Array2::from_shape_fn((rows, Self::width()), |_| {
            if rng.gen::<f64>() < keep {
                scale
            } else {
                0.0
            }
        });
        Self { multipliers }
    }

    pub fn ones(rows: usize) -> Self {
        Self {
            multipliers: Array2::ones((rows, Self::width())),
        }
    }

    pub fn from_array(multipliers: Array2<f64>) -> Result<Self> {
        if multipliers.ncols() != Self::width() {
            return Err(Error::Shape(format!(
                "dropout mask must have {} columns",
                Self::width()
            )));
        }
        Ok(Self { multipliers })
    }

    pub fn rows(&self) -> usize {
        self.multipliers.nrows()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn clamp_score(s: f64) -> f64 {
    s.clamp(SCORE_EPS, 1.0 - SCORE_EPS)
}

struct Trace {
    /// Input to each layer (post-activation, post-dropout of the previous one).
    inputs: Vec<Array2<f64>>,
    /// Hidden pre-activations.
    pre: Vec<Array2<f64>>,
    /// Raw sigmoid outputs.
    outputs: Vec<f64>,
}

fn run(params: &ModelParameters, batch: ArrayView2<f64>, mask: Option<&DropoutMask>) -> Result<Trace> {
    if batch.ncols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "batch width {} does not match model input {}",
            batch.ncols(),
            params.input_dim()
        )));
    }
    if let Some(m) = mask {
        if m.rows() != batch.nrows() {
            return Err(Error::Shape(format!(
                "dropout mask has {} rows for a batch of {}",
                m.rows(),
                batch.nrows()
            )));
        }
    }
    let mut inputs = Vec::with_capacity(LAYER_COUNT);
    let mut pre = Vec::with_capacity(LAYER_COUNT - 1);
    let mut current = batch.to_owned();
    for (i, layer) in params.layers.iter().enumerate() {
        let z = current.dot(&layer.weights) + &layer.biases;
        inputs.push(current);
        if i + 1 == LAYER_COUNT {
            let outputs = z.column(0).iter().map(|&v| sigmoid(v)).collect();
            return Ok(Trace {
                inputs,
                pre,
                outputs,
            });
        }
        let mut a = z.mapv(|v| v.max(0.0));
        if i == DROPOUT_LAYER {
            if let Some(m) = mask {
                a *= &m.multipliers;
            }
        }
        pre.push(z);
        current = a;
    }
    unreachable!("architecture always ends in the output layer")
}

/// Scores in `(0, 1)`. When `dropout_active`, a fresh mask is drawn from `rng`.
pub fn forward(
    params: &ModelParameters,
    batch: ArrayView2<f64>,
    dropout_active: bool,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if dropout_active {
        let mask = DropoutMask::sample(batch.nrows(), DROPOUT_RATE, rng);
        forward_with_mask(params, batch, Some(&mask))
    } else {
        forward_with_mask(params, batch, None)
    }
}

pub fn forward_with_mask(
    params: &ModelParameters,
    batch: ArrayView2<f64>,
    mask: Option<&DropoutMask>,
) -> Result<Vec<f64>> {
    Ok(run(params, batch, mask)?
        .outputs
        .into_iter()
        .map(clamp_score)
        .collect())
}

/// Inference scores, dropout off.
pub fn predict(params: &ModelParameters, batch: ArrayView2<f64>) -> Result<Vec<f64>> {
    forward_with_mask(params, batch, None)
}

/// Mean binary cross-entropy with scores clamped away from 0 and 1.
pub fn bce_loss(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            let s = clamp_score(s);
            -(y * s.ln() + (1.0 - y) * (1.0 - s).ln())
        })
        .sum();
    Ok(total / scores.len() as f64)
}

/// Gradient of the batch-mean BCE with respect to every parameter, plus the
/// batch loss seen by the forward pass.
pub fn backward(
    params: &ModelParameters,
    batch: ArrayView2<f64>,
    labels: &[f64],
    mask: Option<&DropoutMask>,
) -> Result<(Gradients, f64)> {
    if labels.len() != batch.nrows() {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {}",
            labels.len(),
            batch.nrows()
        )));
    }
    let trace = run(params, batch, mask)?;
    let loss = bce_loss(&trace.outputs, labels)?;
    let n = batch.nrows() as f64;

    let mut grads = ModelParameters::zeros(params.input_dim());
    let mut delta = Array2::from_shape_fn((batch.nrows(), 1), |(r, _)| {
        (trace.outputs[r] - labels[r]) / n
    });
    for i in (0..LAYER_COUNT).rev() {
        grads.layers[i].weights = trace.inputs[i].t().dot(&delta);
        grads.layers[i].biases = delta.sum_axis(Axis(0));
        if i == 0 {
            break;
        }
        let mut back = delta.dot(&params.layers[i].weights.t());
        if i - 1 == DROPOUT_LAYER {
            if let Some(m) = mask {
                back *= &m.multipliers;
            }
        }
        Zip::from(&mut back)
            .and(&trace.pre[i - 1])
            .for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
        delta = back;
    }
    Ok((grads, loss))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    first_moment: ModelParameters,
    second_moment: ModelParameters,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(params: &ModelParameters) -> Self {
        Self {
            first_moment: ModelParameters::zeros(params.input_dim()),
            second_moment: ModelParameters::zeros(params.input_dim()),
            step: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. Rejects non-finite gradients before
/// touching any parameter.
pub fn adam_step(
    params: &mut ModelParameters,
    grads: &Gradients,
    state: &mut OptimizerState,
    learning_rate: f64,
) -> Result<()> {
    if !(learning_rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {learning_rate}"
        )));
    }
    if !params.same_shape(grads) || !params.same_shape(&state.first_moment) {
        return Err(Error::Shape("gradient/optimizer shapes differ from model".into()));
    }
    if let Some(layer) = grads.layers.iter().position(|l| {
        !l.weights.iter().chain(l.biases.iter()).all(|g| g.is_finite())
    }) {
        return Err(Error::NonFiniteGradient { layer });
    }
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + eps);
    };
    for (((p, g), m), v) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.first_moment.layers.iter_mut())
        .zip(state.second_moment.layers.iter_mut())
    {
        Zip::from(&mut p.weights)
            .and(&g.weights)
            .and(&mut m.weights)
            .and(&mut v.weights)
            .for_each(|p, &g, m, v| update(p, m, v, g));
        Zip::from(&mut p.biases)
            .and(&g.biases)
            .and(&mut m.biases)
            .and(&mut v.biases)
            .for_each(|p, &g, m, v| update(p, m, v, g));
    }
    Ok(())
}

fn gather(matrix: &GowerMatrix, rows: &[usize]) -> (Array2<f64>, Vec<f64>) {
    let cols = matrix.cols();
    let mut x = Array2::zeros((rows.len(), cols));
    for (dst, &r) in rows.iter().enumerate() {
        for (o, &v) in x.row_mut(dst).iter_mut().zip(matrix.row(r)) {
            *o = f64::from(v);
        }
    }
    let y = rows
        .iter()
        .map(|&r| f64::from(matrix.row_labels()[r]))
        .collect();
    (x, y)
}

/// One pass over `matrix` in seeded shuffled order with dropout active.
/// Returns the sample-weighted mean of the batch losses.
pub fn train_epoch(
    params: &mut ModelParameters,
    state: &mut OptimizerState,
    matrix: &GowerMatrix,
    batch_size: usize,
    learning_rate: f64,
    rng_seed: u64,
) -> Result<f64> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    if matrix.is_empty() {
        return Err(Error::InvalidArgument("training matrix is empty".into()));
    }
    if matrix.cols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "matrix width {} does not match model input {}",
            matrix.cols(),
            params.input_dim()
        )));
    }
    let mut rng = rng_from(rng_seed);
    let mut order: Vec<usize> = (0..matrix.rows()).collect();
    order.shuffle(&mut rng);
    let mut loss_sum = 0.0;
    for chunk in order.chunks(batch_size) {
        let (x, y) = gather(matrix, chunk);
        let mask = DropoutMask::sample(chunk.len(), DROPOUT_RATE, &mut rng);
        let (grads, loss) = backward(params, x.view(), &y, Some(&mask))?;
        adam_step(params, &grads, state, learning_rate)?;
        loss_sum += loss * chunk.len() as f64;
    }
    Ok(loss_sum / matrix.rows() as f64)
}

/// Dropout-off scores for every matrix row, evaluated in chunks.
pub fn predict_matrix(params: &ModelParameters, matrix: &GowerMatrix, chunk: usize) -> Result<Vec<f64>> {
    if matrix.cols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "matrix width {} does not match model input {}",
            matrix.cols(),
            params.input_dim()
        )));
    }
    let chunk = chunk.max(1);
    let mut scores = Vec::with_capacity(matrix.rows());
    let all: Vec<usize> = (0..matrix.rows()).collect();
    for rows in all.chunks(chunk) {
        let (x, _) = gather(matrix, rows);
        scores.extend(predict(params, x.view())?);
    }
    Ok(scores)
}

/// Dropout-off mean BCE over a whole matrix.
pub fn matrix_loss(params: &ModelParameters, matrix: &GowerMatrix, chunk: usize) -> Result<f64> {
    let scores = predict_matrix(params, matrix, chunk)?;
    let labels: Vec<f64> = matrix.row_labels().iter().map(|&l| f64::from(l)).collect();
    bce_loss(&scores, &labels)
}
