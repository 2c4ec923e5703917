//! Per-angle masked convolutional regressors: forward pass, hand-derived
//! gradients, Adam training, evaluation and the sixteen-model predictor.

mod arch;
mod eval;
mod gradcheck;
pub(crate) mod net;
mod params;
mod train;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{frame_tensor, FeatureError, RelationTensor, TensorBatch, CHANNELS};
use crate::skeleton::{AngleName, JointAngleSet, PoseFrame};

pub use arch::{Architecture, ArchitectureKind, LayerShape};
pub use eval::{evaluate, AngleMetrics, ErrorStats, EvalReport};
pub use gradcheck::{gradient_check, gradient_check_on, GradCheckReport};
pub use net::GridInput;
pub use params::{Layer, Params};
pub use train::{train, AdamConfig, EpochRecord, TrainConfig, TrainHistory};

use net::{Activations, Scratch};

/// Batches are reduced in fixed chunks of this many samples so the summation
/// order does not depend on the thread count.
const GRADIENT_CHUNK: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("missing models for: {}", .0.iter().map(|a| a.acronym()).collect::<Vec<_>>().join(", "))]
    MissingModel(Vec<AngleName>),
    #[error("loss became non-finite at epoch {epoch}; lower the learning rate")]
    DivergedLoss { epoch: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Bookkeeping stored alongside trained weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub final_train_rmse: Option<f64>,
    pub final_val_rmse: Option<f64>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub train_seed: Option<u64>,
    pub train_samples: usize,
    #[serde(default)]
    pub keypoint_dropout: Option<f64>,
}

/// Weights of one per-angle regressor. The raw output is the angle divided by 180.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleModel {
    pub angle: AngleName,
    pub architecture: Architecture,
    pub params: Params,
    pub seed: u64,
    pub training_meta: TrainingMeta,
}

impl AngleModel {
    /// He-uniform initialisation, deterministic per `(angle, seed)`.
    pub fn init(angle: AngleName, seed: u64) -> Self {
        Self::init_with(angle, Architecture::FULL, seed)
    }

    pub fn init_with(angle: AngleName, architecture: Architecture, seed: u64) -> Self {
        let params = Params::he_uniform(&architecture, &mut params::init_rng(angle.index(), seed));
        Self { angle, architecture, params, seed, training_meta: TrainingMeta::default() }
    }

    /// All weights and biases zero; predicts 0 for every input.
    pub fn zeros(angle: AngleName, architecture: Architecture) -> Self {
        Self {
            angle,
            architecture,
            params: Params::zeros(&architecture),
            seed: 0,
            training_meta: TrainingMeta::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.architecture.validate()?;
        self.params.check_shapes(&self.architecture)?;
        if !self.params.is_finite() {
            return Err(ModelError::ShapeMismatch("non-finite weight".into()));
        }
        Ok(())
    }

    fn check_input(&self, input: &GridInput<'_>) -> Result<(), ModelError> {
        let cells = self.architecture.grid * self.architecture.grid;
        if input.mask.len() != cells || input.features.len() != cells * self.architecture.in_channels {
            return Err(ModelError::ShapeMismatch(format!(
                "model expects a {g}×{g}×{c} input, got {} features and {} mask cells",
                input.features.len(),
                input.mask.len(),
                g = self.architecture.grid,
                c = self.architecture.in_channels,
            )));
        }
        Ok(())
    }

    /// Unclamped network output (normalised angle).
    pub fn raw_output(&self, input: GridInput<'_>) -> Result<f64, ModelError> {
        self.check_input(&input)?;
        let mut act = Activations::new(&self.architecture);
        Ok(net::forward(&self.architecture, &self.params, input, &mut act))
    }

    /// Predicted angle in degrees, clamped to `[0, 180]`.
    pub fn forward(&self, tensor: &RelationTensor) -> Result<f64, ModelError> {
        self.raw_output(grid_input(tensor)).map(to_degrees)
    }
}

pub(crate) fn grid_input(tensor: &RelationTensor) -> GridInput<'_> {
    GridInput { features: &tensor.features, mask: &tensor.mask }
}

fn to_degrees(raw: f64) -> f64 {
    (180.0 * raw).clamp(0.0, 180.0)
}

/// Convenience wrapper for [`AngleModel::forward`].
pub fn forward(model: &AngleModel, tensor: &RelationTensor) -> Result<f64, ModelError> {
    model.forward(tensor)
}

/// Mean squared error on `angle / 180` targets over the batch, with its exact
/// gradient for every parameter.
pub fn loss_and_gradients(
    model: &AngleModel,
    batch: &[(&RelationTensor, f64)],
) -> Result<(f64, Params), ModelError> {
    let inputs: Vec<(GridInput<'_>, f64)> = batch.iter().map(|(t, y)| (grid_input(t), *y)).collect();
    loss_and_gradients_grid(model, &inputs)
}

/// Same as [`loss_and_gradients`] over raw grid inputs of any architecture.
pub fn loss_and_gradients_grid(
    model: &AngleModel,
    batch: &[(GridInput<'_>, f64)],
) -> Result<(f64, Params), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    for (input, _) in batch {
        model.check_input(input)?;
    }
    let arch = &model.architecture;
    let scale = 1.0 / batch.len() as f64;

    let partials: Vec<(f64, Params)> = batch
        .par_chunks(GRADIENT_CHUNK)
        .map(|chunk| {
            let mut act = Activations::new(arch);
            let mut scratch = Scratch::new(arch);
            let mut grad = Params::zeros(arch);
            let mut sq = 0.0;
            for (input, target_deg) in chunk {
                let out = net::forward(arch, &model.params, *input, &mut act);
                let err = out - target_deg / 180.0;
                sq += err * err;
                net::backward(arch, &model.params, &act, 2.0 * err * scale, &mut scratch, &mut grad);
            }
            (sq, grad)
        })
        .collect();

    let mut iter = partials.into_iter();
    let (mut sq, mut grad) = iter.next().expect("non-empty batch");
    for (s, g) in iter {
        sq += s;
        grad.add_assign(&g);
    }
    Ok((sq * scale, grad))
}

/// The sixteen per-angle models used together for prediction.
#[derive(Debug, Clone, Default)]
pub struct ModelSet {
    models: BTreeMap<AngleName, AngleModel>,
}

impl ModelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, model: AngleModel) -> Option<AngleModel> {
        self.models.insert(model.angle, model)
    }

    pub fn get(&self, angle: AngleName) -> Option<&AngleModel> {
        self.models.get(&angle)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &AngleModel> {
        self.models.values()
    }

    pub fn missing(&self) -> Vec<AngleName> {
        AngleName::ALL.into_iter().filter(|a| !self.models.contains_key(a)).collect()
    }

    pub fn require_complete(&self) -> Result<(), ModelError> {
        let missing = self.missing();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(ModelError::MissingModel(missing))
        }
    }

    /// Predictions of all sixteen models for one tensor.
    pub fn predict_tensor(&self, tensor: &RelationTensor) -> Result<JointAngleSet, ModelError> {
        self.require_complete()?;
        let mut out = JointAngleSet::new();
        for model in self.models.values() {
            out.set(model.angle, model.forward(tensor)?);
        }
        Ok(out)
    }
}

impl FromIterator<AngleModel> for ModelSet {
    fn from_iter<T: IntoIterator<Item = AngleModel>>(iter: T) -> Self {
        let mut set = ModelSet::new();
        for m in iter {
            set.insert(m);
        }
        set
    }
}

/// Initialises and trains one model per listed angle, in the order given.
/// Model `a` starts from `AngleModel::init(a, init_seed)`.
pub fn train_models(
    angles: &[AngleName],
    init_seed: u64,
    train_set: &TensorBatch,
    validation: Option<&TensorBatch>,
    config: &TrainConfig,
) -> Result<(ModelSet, Vec<(AngleName, TrainHistory)>), ModelError> {
    let mut set = ModelSet::new();
    let mut histories = Vec::with_capacity(angles.len());
    for &angle in angles {
        let (model, history) = train(AngleModel::init(angle, init_seed), train_set, validation, config)?;
        log::info!(
            "{angle}: {} epochs, train RMSE {:.3}",
            history.len(),
            history.last().map_or(f64::NAN, |h| h.train_rmse)
        );
        set.insert(model);
        histories.push((angle, history));
    }
    Ok((set, histories))
}

/// Predicts all sixteen angles for one detected person.
pub fn predict_all(models: &ModelSet, frame: &PoseFrame) -> Result<JointAngleSet, ModelError> {
    models.require_complete()?;
    let tensor = frame_tensor(frame)?;
    models.predict_tensor(&tensor)
}

/// Number of input channels the full architecture consumes.
pub const INPUT_CHANNELS: usize = CHANNELS;
