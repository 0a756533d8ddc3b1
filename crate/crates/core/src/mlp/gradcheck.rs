//! Finite-difference check of the backpropagated gradients.

use super::model::MlpModel;
use super::train::{loss_and_gradients, TrainingSample};
use ndarray::{Array1, Array2};

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    /// Flattened over layers: all weights of a layer (row-major), then its biases.
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_relative_error: f64,
}

fn sample_loss(model: &MlpModel, x: &Array2<f64>, y: &Array1<f64>) -> f64 {
    let pred = model.forward(x.view())[0] * model.scaling.output_scale;
    (pred - y[0]).powi(2)
}

#[derive(Clone, Copy)]
enum Param {
    Weight(usize, usize, usize),
    Bias(usize, usize),
}

fn param_mut(m: &mut MlpModel, p: Param) -> &mut f64 {
    match p {
        Param::Weight(l, i, j) => &mut m.weights[l][(i, j)],
        Param::Bias(l, i) => &mut m.biases[l][i],
    }
}

fn central(probe: &mut MlpModel, p: Param, step: f64, x: &Array2<f64>, y: &Array1<f64>) -> f64 {
    let orig = *param_mut(probe, p);
    *param_mut(probe, p) = orig + step;
    let up = sample_loss(probe, x, y);
    *param_mut(probe, p) = orig - step;
    let down = sample_loss(probe, x, y);
    *param_mut(probe, p) = orig;
    (up - down) / (2.0 * step)
}

/// Relative error with a small floor so that two vanishing gradients
/// compare as equal.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs().max(b.abs())).max(1e-8)
}

/// Compares the analytic gradient of the squared error on one sample with
/// central differences of step `step`.
pub fn gradient_check(model: &MlpModel, sample: &TrainingSample, step: f64) -> GradientCheck {
    let x = model.encode_batch(std::slice::from_ref(&sample.feature));
    let y = Array1::from(vec![sample.distance]);
    let (_, grads) = loss_and_gradients(model, x.view(), y.view());

    let mut analytic = Vec::with_capacity(model.num_parameters());
    let mut numeric = Vec::with_capacity(model.num_parameters());
    let mut probe = model.clone();
    for l in 0..model.num_layers() {
        let (rows, cols) = model.weights[l].dim();
        for i in 0..rows {
            for j in 0..cols {
                analytic.push(grads.weights[l][(i, j)]);
                numeric.push(central(&mut probe, Param::Weight(l, i, j), step, &x, &y));
            }
        }
        for i in 0..rows {
            analytic.push(grads.biases[l][i]);
            numeric.push(central(&mut probe, Param::Bias(l, i), step, &x, &y));
        }
    }
    let max_relative_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max);
    GradientCheck {
        analytic,
        numeric,
        max_relative_error,
    }
}
