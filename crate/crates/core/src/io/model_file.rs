use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{write_atomic, IoError};
use crate::regressor::{AngleModel, Architecture, Layer, LayerShape, ModelError, ModelSet, Params, TrainingMeta};
use crate::skeleton::AngleName;

pub const MODEL_FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct ArchitectureDoc {
    #[serde(flatten)]
    sizes: Architecture,
    layers: Vec<LayerShape>,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format_version: u64,
    angle: AngleName,
    architecture: ArchitectureDoc,
    /// Keyed by layer name; weights row-major in the shape listed above.
    weights: BTreeMap<String, LayerDoc>,
    seed: u64,
    training_meta: TrainingMeta,
}

pub fn model_to_json(model: &AngleModel) -> String {
    let shapes = model.architecture.layer_shapes();
    let weights = shapes
        .iter()
        .zip(model.params.layers())
        .map(|(s, l)| (s.name.clone(), LayerDoc { weight: l.weight.clone(), bias: l.bias.clone() }))
        .collect();
    let doc = ModelDoc {
        format_version: MODEL_FORMAT_VERSION,
        angle: model.angle,
        architecture: ArchitectureDoc { sizes: model.architecture, layers: shapes.to_vec() },
        weights,
        seed: model.seed,
        training_meta: model.training_meta.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("model documents are plain data")
}

pub fn model_from_json(text: &str) -> Result<AngleModel, IoError> {
    let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| IoError::MalformedJson(e.to_string()))?;
    match raw.get("format_version").and_then(serde_json::Value::as_u64) {
        Some(MODEL_FORMAT_VERSION) => {}
        Some(v) => return Err(IoError::UnsupportedFormat(v)),
        None => return Err(IoError::MalformedJson("missing format_version".into())),
    }
    let mut doc: ModelDoc = serde_json::from_value(raw).map_err(|e| IoError::MalformedJson(e.to_string()))?;

    let arch = doc.architecture.sizes;
    arch.validate()?;
    let expected = arch.layer_shapes();
    if doc.architecture.layers != expected {
        return Err(ModelError::ShapeMismatch("declared layer shapes do not match the architecture".into()).into());
    }
    let mut params = Params::zeros(&arch);
    for (slot, shape) in params.layers_mut().into_iter().zip(&expected) {
        let layer = doc
            .weights
            .remove(&shape.name)
            .ok_or_else(|| ModelError::ShapeMismatch(format!("no weights for layer {}", shape.name)))?;
        *slot = Layer { weight: layer.weight, bias: layer.bias };
    }
    if let Some(extra) = doc.weights.keys().next() {
        return Err(ModelError::ShapeMismatch(format!("unknown layer {extra}")).into());
    }
    let model = AngleModel { angle: doc.angle, architecture: arch, params, seed: doc.seed, training_meta: doc.training_meta };
    model.validate()?;
    Ok(model)
}

pub fn save_model(path: &Path, model: &AngleModel) -> Result<(), IoError> {
    let text = model_to_json(model);
    write_atomic(path, |w| w.write_all(text.as_bytes()).map_err(|e| IoError::io(path, e)))
}

pub fn load_model(path: &Path) -> Result<AngleModel, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    model_from_json(&text)
}

fn model_path(dir: &Path, angle: AngleName) -> PathBuf {
    dir.join(format!("{}.json", angle.acronym()))
}

/// Writes `<ANGLE>.json` for every model in the set.
pub fn save_model_dir(dir: &Path, models: &ModelSet) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    for m in models.iter() {
        save_model(&model_path(dir, m.angle), m)?;
    }
    Ok(())
}

/// Loads every `<ANGLE>.json` present in `dir`. Absent files are left out;
/// callers needing all sixteen check [`ModelSet::require_complete`].
pub fn load_model_dir(dir: &Path) -> Result<ModelSet, IoError> {
    if !dir.is_dir() {
        return Err(IoError::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "model directory not found")));
    }
    let mut set = ModelSet::new();
    for angle in AngleName::ALL {
        let path = model_path(dir, angle);
        if path.exists() {
            let model = load_model(&path)?;
            if model.angle != angle {
                return Err(ModelError::ShapeMismatch(format!("{} holds a model for {}", path.display(), model.angle)).into());
            }
            set.insert(model);
        }
    }
    Ok(set)
}
