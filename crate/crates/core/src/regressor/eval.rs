use serde::{Deserialize, Serialize};

use super::{ModelError, ModelSet};
use crate::features::TensorBatch;
use crate::skeleton::{AngleName, NUM_ANGLES};

/// Running error sums; MAE and RMSE are derived, so pooling is exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub n: usize,
    pub sum_abs: f64,
    pub sum_sq: f64,
}

impl ErrorStats {
    pub fn push(&mut self, error: f64) {
        self.n += 1;
        self.sum_abs += error.abs();
        self.sum_sq += error * error;
    }

    pub fn merge(&mut self, other: &ErrorStats) {
        self.n += other.n;
        self.sum_abs += other.sum_abs;
        self.sum_sq += other.sum_sq;
    }

    pub fn mae(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum_abs / self.n as f64
        }
    }

    pub fn rmse(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.sum_sq / self.n as f64).sqrt()
        }
    }
}

/// Train and test errors of one angle, in degrees.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AngleMetrics {
    pub train: ErrorStats,
    pub test: ErrorStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// One row per angle in table order.
    pub per_angle: Vec<(AngleName, AngleMetrics)>,
    /// All (sample, angle) errors of each split pooled together.
    pub aggregate_train: ErrorStats,
    pub aggregate_test: ErrorStats,
    /// Samples dropped because no tensor could be built.
    pub excluded_train: usize,
    pub excluded_test: usize,
}

impl EvalReport {
    pub fn metrics(&self, angle: AngleName) -> &AngleMetrics {
        &self.per_angle[angle.index()].1
    }
}

fn accumulate(models: &ModelSet, data: &TensorBatch) -> Result<[ErrorStats; NUM_ANGLES], ModelError> {
    let mut stats = [ErrorStats::default(); NUM_ANGLES];
    for (tensor, truth) in data.tensors.iter().zip(&data.truths) {
        let predicted = models.predict_tensor(tensor)?;
        for (angle, t) in truth.present() {
            let p = predicted.get(angle).expect("complete model set");
            stats[angle.index()].push(p - t);
        }
    }
    Ok(stats)
}

/// Per-angle and pooled MAE/RMSE of all sixteen models on both splits.
pub fn evaluate(models: &ModelSet, train: &TensorBatch, test: &TensorBatch) -> Result<EvalReport, ModelError> {
    models.require_complete()?;
    let train_stats = accumulate(models, train)?;
    let test_stats = accumulate(models, test)?;
    let mut aggregate_train = ErrorStats::default();
    let mut aggregate_test = ErrorStats::default();
    let per_angle = AngleName::ALL
        .into_iter()
        .map(|a| {
            let m = AngleMetrics { train: train_stats[a.index()], test: test_stats[a.index()] };
            aggregate_train.merge(&m.train);
            aggregate_test.merge(&m.test);
            (a, m)
        })
        .collect();
    Ok(EvalReport {
        per_angle,
        aggregate_train,
        aggregate_test,
        excluded_train: train.dropped.len(),
        excluded_test: test.dropped.len(),
    })
}
