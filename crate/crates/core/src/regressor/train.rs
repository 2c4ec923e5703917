use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::ErrorStats;
use super::params::Params;
use super::{grid_input, loss_and_gradients_grid, AngleModel, GridInput, ModelError};
use crate::features::TensorBatch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub shuffle: bool,
    /// Stop as soon as the training-set RMSE (degrees, clamped predictions)
    /// falls to this value. Costs one extra forward pass over the training
    /// set per epoch.
    pub stop_at_train_rmse: Option<f64>,
    /// Each epoch, hide every keypoint of every training example with this
    /// probability (on top of whatever the data already lacks).
    pub keypoint_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 20,
            adam: AdamConfig::default(),
            seed: 0,
            shuffle: true,
            stop_at_train_rmse: None,
            keypoint_dropout: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.keypoint_dropout) {
            return bad("keypoint dropout must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be positive");
        }
        let AdamConfig { beta1, beta2, epsilon } = self.adam;
        if !(0.0 < beta1 && beta1 < 1.0 && 0.0 < beta2 && beta2 < 1.0) {
            return bad("Adam betas must lie in (0, 1)");
        }
        if !(epsilon > 0.0) {
            return bad("Adam epsilon must be positive");
        }
        Ok(())
    }
}

/// Per-epoch RMSE in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Running RMSE over the epoch's mini-batches, measured before each
    /// update; exact clamped RMSE when early stopping is enabled.
    pub train_rmse: f64,
    pub val_rmse: Option<f64>,
}

pub type TrainHistory = Vec<EpochRecord>;

struct Adam {
    config: AdamConfig,
    m: Params,
    v: Params,
    step: i32,
}

impl Adam {
    fn new(config: AdamConfig, like: &Params) -> Self {
        let mut m = like.clone();
        m.fill_zero();
        Self { config, v: m.clone(), m, step: 0 }
    }

    fn update(&mut self, params: &mut Params, grad: &Params, lr: f64) {
        let AdamConfig { beta1, beta2, epsilon } = self.config;
        self.step += 1;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        let slots = params.slices_mut().zip(grad.slices()).zip(self.m.slices_mut()).zip(self.v.slices_mut());
        for (((p, g), m), v) in slots {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
    }
}

/// RMSE in degrees of the model's clamped predictions on `data`.
pub(crate) fn rmse_on(model: &AngleModel, data: &TensorBatch) -> Result<f64, ModelError> {
    let mut stats = ErrorStats::default();
    for (tensor, truth) in data.tensors.iter().zip(&data.truths) {
        if let Some(t) = truth.get(model.angle) {
            stats.push(model.forward(tensor)? - t);
        }
    }
    Ok(stats.rmse())
}

/// Mini-batch Adam on MSE of normalised targets. Deterministic in
/// `(model, data, config)`.
pub fn train(
    mut model: AngleModel,
    train_set: &TensorBatch,
    validation: Option<&TensorBatch>,
    config: &TrainConfig,
) -> Result<(AngleModel, TrainHistory), ModelError> {
    config.validate()?;
    model.validate()?;
    let angle = model.angle;
    let examples: Vec<(GridInput<'_>, f64)> = train_set
        .tensors
        .iter()
        .zip(&train_set.truths)
        .filter_map(|(t, truth)| truth.get(angle).map(|y| (grid_input(t), y)))
        .collect();
    if examples.is_empty() {
        return Err(ModelError::EmptyBatch);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(1);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut adam = Adam::new(config.adam, &model.params);
    let mut history = TrainHistory::new();
    let grid = model.architecture.grid;
    let mut masks: Vec<Vec<f64>> = if config.keypoint_dropout > 0.0 {
        examples.iter().map(|(input, _)| input.mask.to_vec()).collect()
    } else {
        Vec::new()
    };

    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        for (mask, (input, _)) in masks.iter_mut().zip(&examples) {
            let keep: Vec<bool> = (0..grid).map(|_| !dropout_rng.random_bool(config.keypoint_dropout)).collect();
            for (cell, (m, &orig)) in mask.iter_mut().zip(input.mask).enumerate() {
                *m = if keep[cell / grid] && keep[cell % grid] { orig } else { 0.0 };
            }
        }
        let mut sq_sum = 0.0;
        let mut batch = Vec::with_capacity(config.batch_size);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| match masks.get(i) {
                Some(mask) => (GridInput { features: examples[i].0.features, mask }, examples[i].1),
                None => examples[i],
            }));
            let (loss, grad) = loss_and_gradients_grid(&model, &batch)?;
            if !loss.is_finite() {
                return Err(ModelError::DivergedLoss { epoch });
            }
            sq_sum += loss * batch.len() as f64;
            adam.update(&mut model.params, &grad, config.learning_rate);
        }
        if !model.params.is_finite() {
            return Err(ModelError::DivergedLoss { epoch });
        }

        let mut train_rmse = 180.0 * (sq_sum / examples.len() as f64).sqrt();
        let mut reached_target = false;
        if let Some(target) = config.stop_at_train_rmse {
            train_rmse = rmse_on(&model, train_set)?;
            reached_target = train_rmse <= target;
        }
        let val_rmse = match validation {
            Some(v) if !v.is_empty() => Some(rmse_on(&model, v)?),
            _ => None,
        };
        log::debug!("{angle} epoch {epoch}: train RMSE {train_rmse:.3}, val {val_rmse:?}");
        history.push(EpochRecord { epoch, train_rmse, val_rmse });
        if reached_target {
            break;
        }
    }

    let last = history.last().expect("at least one epoch");
    model.training_meta = super::TrainingMeta {
        epochs: history.len(),
        final_train_rmse: Some(last.train_rmse),
        final_val_rmse: last.val_rmse,
        learning_rate: Some(config.learning_rate),
        batch_size: Some(config.batch_size),
        train_seed: Some(config.seed),
        train_samples: examples.len(),
        keypoint_dropout: Some(config.keypoint_dropout),
    };
    Ok((model, history))
}

