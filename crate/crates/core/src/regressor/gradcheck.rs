use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::ArchitectureKind;
use super::net::{self, Activations};
use super::{loss_and_gradients_grid, AngleModel, GridInput, ModelError};
use crate::skeleton::AngleName;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for relative errors of near-zero gradient components.
pub const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Components compared.
    pub checked: usize,
    /// Components skipped because a ±step perturbation crossed a ReLU or
    /// pooling boundary, where the loss is not differentiable.
    pub skipped: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

fn loss_with_signature(model: &AngleModel, batch: &[(GridInput<'_>, f64)]) -> (f64, Vec<Vec<u64>>) {
    let mut act = Activations::new(&model.architecture);
    let mut sq = 0.0;
    let mut sigs = Vec::with_capacity(batch.len());
    for (input, target) in batch {
        let out = net::forward(&model.architecture, &model.params, *input, &mut act);
        let e = out - target / 180.0;
        sq += e * e;
        sigs.push(act.signature());
    }
    (sq / batch.len() as f64, sigs)
}

/// Compares analytic gradients with central differences for every parameter
/// of `model` on `batch`.
pub fn gradient_check_on(model: &AngleModel, batch: &[(GridInput<'_>, f64)]) -> Result<GradCheckReport, ModelError> {
    let (_, grad) = loss_and_gradients_grid(model, batch)?;
    let analytic = grad.to_flat();
    let (_, base_sig) = loss_with_signature(model, batch);
    let mut probe = model.clone();
    let mut numeric = vec![0.0; analytic.len()];
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
        skipped: 0,
        analytic: Vec::new(),
        numeric: Vec::new(),
    };
    for (i, a) in analytic.iter().enumerate() {
        let original = model.params.get_flat(i);
        probe.params.set_flat(i, original + FD_STEP);
        let (plus, sig_plus) = loss_with_signature(&probe, batch);
        probe.params.set_flat(i, original - FD_STEP);
        let (minus, sig_minus) = loss_with_signature(&probe, batch);
        probe.params.set_flat(i, original);
        numeric[i] = (plus - minus) / (2.0 * FD_STEP);
        if sig_plus != base_sig || sig_minus != base_sig {
            report.skipped += 1;
            continue;
        }
        let abs = (a - numeric[i]).abs();
        let rel = abs / a.abs().max(numeric[i].abs()).max(REL_FLOOR);
        report.max_abs_error = report.max_abs_error.max(abs);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.checked += 1;
    }
    report.analytic = analytic;
    report.numeric = numeric;
    Ok(report)
}

/// Seeded random model and a seeded two-sample random input batch.
pub fn gradient_check(kind: ArchitectureKind, seed: u64) -> Result<GradCheckReport, ModelError> {
    let arch = kind.architecture();
    let mut model = AngleModel::init_with(AngleName::EL, arch, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    // Non-zero biases so every bias path is exercised.
    for s in model.params.layers_mut() {
        for b in &mut s.bias {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    let cells = arch.grid * arch.grid;
    let inputs: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..2)
        .map(|_| {
            let features = (0..cells * arch.in_channels).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mask = (0..cells).map(|_| if rng.random_bool(0.8) { 1.0 } else { 0.0 }).collect();
            (features, mask, rng.random_range(0.0..180.0))
        })
        .collect();
    let batch: Vec<(GridInput<'_>, f64)> = inputs
        .iter()
        .map(|(f, m, y)| (GridInput { features: f, mask: m }, *y))
        .collect();
    gradient_check_on(&model, &batch)
}
