//! Mini-batch Adam training on the mean squared error in inches.

use super::features::PairFeature;
use super::model::{FeatureScaling, MlpModel, DEFAULT_LAYERS};
use super::MlpError;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub feature: PairFeature,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a validation improvement.
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub validation_fraction: f64,
    pub layer_sizes: Vec<usize>,
    /// Inches per unit of raw network output.
    pub output_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 300,
            patience: 20,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            validation_fraction: 0.2,
            layer_sizes: DEFAULT_LAYERS.to_vec(),
            output_scale: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MlpError> {
        let bad = |m: &str| Err(MlpError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) || !(self.output_scale > 0.0) {
            return bad("epsilon and output_scale must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    /// Epoch 0 is the untrained model.
    pub epoch: usize,
    pub train_mse: f64,
    pub validation_mse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: MlpModel,
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn best(&self) -> &EpochLoss {
        &self.history[self.best_epoch]
    }
}

pub(crate) struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// MSE over the batch (in inches squared) and its parameter gradients.
pub(crate) fn loss_and_gradients(
    model: &MlpModel,
    input: ArrayView2<f64>,
    target: ArrayView1<f64>,
) -> (f64, Gradients) {
    let scale = model.scaling.output_scale;
    let cache = model.forward_cached(input);
    let out = cache
        .activations
        .last()
        .unwrap()
        .column(0)
        .mapv(|v| v * scale);
    let m = target.len() as f64;
    let err = &out - &target;
    let loss = err.mapv(|e| e * e).sum() / m;

    let layers = model.num_layers();
    let mut weights = Vec::with_capacity(layers);
    let mut biases = Vec::with_capacity(layers);
    let mut delta: Array2<f64> = (err * (2.0 * scale / m)).insert_axis(Axis(1));
    for l in (0..layers).rev() {
        let a_prev = &cache.activations[l];
        weights.push(delta.t().dot(a_prev));
        biases.push(delta.sum_axis(Axis(0)));
        if l > 0 {
            let mut back = delta.dot(&model.weights[l]);
            back.zip_mut_with(a_prev, |d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = back;
        }
    }
    weights.reverse();
    biases.reverse();
    (loss, Gradients { weights, biases })
}

struct Adam {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    lr: f64,
    step: i32,
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
}

impl Adam {
    fn new(model: &MlpModel, cfg: &TrainConfig) -> Self {
        Self {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            lr: cfg.learning_rate,
            step: 0,
            m_w: model
                .weights
                .iter()
                .map(|w| Array2::zeros(w.dim()))
                .collect(),
            v_w: model
                .weights
                .iter()
                .map(|w| Array2::zeros(w.dim()))
                .collect(),
            m_b: model
                .biases
                .iter()
                .map(|b| Array1::zeros(b.len()))
                .collect(),
            v_b: model
                .biases
                .iter()
                .map(|b| Array1::zeros(b.len()))
                .collect(),
        }
    }

    fn update(&mut self, model: &mut MlpModel, grads: &Gradients) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let lr_t = self.lr * (1.0 - b2.powi(self.step)).sqrt() / (1.0 - b1.powi(self.step));
        let apply = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr_t * *m / (v.sqrt() + eps);
        };
        for l in 0..model.num_layers() {
            ndarray::Zip::from(&mut model.weights[l])
                .and(&grads.weights[l])
                .and(&mut self.m_w[l])
                .and(&mut self.v_w[l])
                .for_each(|p, &g, m, v| apply(p, g, m, v));
            ndarray::Zip::from(&mut model.biases[l])
                .and(&grads.biases[l])
                .and(&mut self.m_b[l])
                .and(&mut self.v_b[l])
                .for_each(|p, &g, m, v| apply(p, g, m, v));
        }
    }
}

fn mse(model: &MlpModel, input: &Array2<f64>, target: &Array1<f64>) -> f64 {
    let pred = model.forward(input.view()) * model.scaling.output_scale;
    (pred - target).mapv(|e| e * e).mean().unwrap_or(0.0)
}

fn gather(input: &Array2<f64>, target: &Array1<f64>, idx: &[usize]) -> (Array2<f64>, Array1<f64>) {
    (input.select(Axis(0), idx), target.select(Axis(0), idx))
}

/// Trains a fresh model. Deterministic for a given config and sample order.
pub fn train(
    samples: &[TrainingSample],
    scaling: FeatureScaling,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, MlpError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(MlpError::EmptyDataset);
    }
    if let Some(i) = samples
        .iter()
        .position(|s| !s.feature.is_finite() || !s.distance.is_finite())
    {
        return Err(MlpError::NonFiniteSample(i));
    }
    let scaling = FeatureScaling {
        output_scale: cfg.output_scale,
        ..scaling
    };
    let mut model = MlpModel::new(&cfg.layer_sizes, scaling, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_da7a);

    let features: Vec<PairFeature> = samples.iter().map(|s| s.feature).collect();
    let input = model.encode_batch(&features);
    let target: Array1<f64> = samples.iter().map(|s| s.distance).collect();

    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if samples.len() < 2 {
        0
    } else {
        ((samples.len() as f64 * cfg.validation_fraction).round() as usize)
            .clamp(1, samples.len() - 1)
    };
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let (train_x, train_y) = gather(&input, &target, &train_idx);
    // A single sample validates on itself.
    let (val_x, val_y) = if n_val == 0 {
        (train_x.clone(), train_y.clone())
    } else {
        gather(&input, &target, val_idx)
    };

    let initial_train = mse(&model, &train_x, &train_y);
    let initial_val = mse(&model, &val_x, &val_y);
    let mut history = vec![EpochLoss {
        epoch: 0,
        train_mse: initial_train,
        validation_mse: initial_val,
    }];
    // Losses this far above the starting point mean the run has blown up.
    let blowup = 1e8 * (1.0 + initial_train);

    let mut best = (0usize, initial_val, model.clone());
    let mut adam = Adam::new(&model, cfg);
    for epoch in 1..=cfg.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let (x, y) = gather(&input, &target, chunk);
            let (loss, grads) = loss_and_gradients(&model, x.view(), y.view());
            if !loss.is_finite() || loss > blowup {
                return Err(MlpError::DivergedTraining { epoch, loss });
            }
            total += loss * chunk.len() as f64;
            adam.update(&mut model, &grads);
        }
        let train_mse = total / train_idx.len() as f64;
        let validation_mse = mse(&model, &val_x, &val_y);
        if !validation_mse.is_finite() || validation_mse > blowup {
            return Err(MlpError::DivergedTraining {
                epoch,
                loss: validation_mse,
            });
        }
        history.push(EpochLoss {
            epoch,
            train_mse,
            validation_mse,
        });
        if validation_mse < best.1 {
            best = (epoch, validation_mse, model.clone());
        } else if epoch - best.0 >= cfg.patience {
            break;
        }
    }
    let (best_epoch, _, model) = best;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}
