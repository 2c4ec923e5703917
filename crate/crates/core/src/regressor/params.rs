use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::{Architecture, LayerShape};
use super::ModelError;

/// Weights and biases of one layer, row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Layer {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(shape: &LayerShape) -> Self {
        Self { weight: vec![0.0; shape.weight_len()], bias: vec![0.0; shape.bias] }
    }
}

/// Full parameter set of the regressor. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub conv_a: Layer,
    pub pointwise: Layer,
    pub conv_b: Layer,
    pub conv_c: Layer,
    pub hidden: Layer,
    pub output: Layer,
}

impl Params {
    pub fn zeros(arch: &Architecture) -> Self {
        let [a, p, b, c, h, o] = arch.layer_shapes();
        Self {
            conv_a: Layer::zeros(&a),
            pointwise: Layer::zeros(&p),
            conv_b: Layer::zeros(&b),
            conv_c: Layer::zeros(&c),
            hidden: Layer::zeros(&h),
            output: Layer::zeros(&o),
        }
    }

    /// He-uniform weights, `U(−√(6/fan_in), √(6/fan_in))`, zero biases.
    pub fn he_uniform(arch: &Architecture, rng: &mut impl Rng) -> Self {
        let mut params = Self::zeros(arch);
        for (layer, shape) in params.layers_mut().into_iter().zip(arch.layer_shapes()) {
            let limit = (6.0 / shape.fan_in() as f64).sqrt();
            for w in &mut layer.weight {
                *w = rng.random_range(-limit..=limit);
            }
        }
        params
    }

    pub fn layers(&self) -> [&Layer; 6] {
        [&self.conv_a, &self.pointwise, &self.conv_b, &self.conv_c, &self.hidden, &self.output]
    }

    pub fn layers_mut(&mut self) -> [&mut Layer; 6] {
        [
            &mut self.conv_a,
            &mut self.pointwise,
            &mut self.conv_b,
            &mut self.conv_c,
            &mut self.hidden,
            &mut self.output,
        ]
    }

    /// Every parameter slice (weight then bias, per layer) in forward order.
    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers().into_iter().flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.layers_mut().into_iter().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn len(&self) -> usize {
        self.slices().map(<[f64]>::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().flat_map(|s| s.iter().copied()).collect()
    }

    pub fn get_flat(&self, mut index: usize) -> f64 {
        for s in self.slices() {
            if index < s.len() {
                return s[index];
            }
            index -= s.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_flat(&mut self, mut index: usize, value: f64) {
        for s in self.slices_mut() {
            if index < s.len() {
                s[index] = value;
                return;
            }
            index -= s.len();
        }
        panic!("parameter index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.slices().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// `self += other`, element by element in a fixed order.
    pub fn add_assign(&mut self, other: &Params) {
        for (dst, src) in self.slices_mut().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            for v in s.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn fill_zero(&mut self) {
        for s in self.slices_mut() {
            s.fill(0.0);
        }
    }

    pub fn check_shapes(&self, arch: &Architecture) -> Result<(), ModelError> {
        for (layer, shape) in self.layers().into_iter().zip(arch.layer_shapes()) {
            if layer.weight.len() != shape.weight_len() || layer.bias.len() != shape.bias {
                return Err(ModelError::ShapeMismatch(format!(
                    "layer {}: expected {} weights and {} biases, found {} and {}",
                    shape.name,
                    shape.weight_len(),
                    shape.bias,
                    layer.weight.len(),
                    layer.bias.len()
                )));
            }
        }
        Ok(())
    }
}

/// Deterministic generator for weight initialisation, keyed by angle and seed.
pub(crate) fn init_rng(angle_index: usize, seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(angle_index as u64 + 1);
    rng
}
