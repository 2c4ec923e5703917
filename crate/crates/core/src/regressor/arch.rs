use serde::{Deserialize, Serialize};

use super::ModelError;

/// Layer sizes of the per-angle regressor.
///
/// ConvA (3×3) → ReLU → pointwise dense (1×1) → ReLU → ConvB (3×3) → ReLU →
/// 2×2 max-pool (floor) → ConvC (3×3) → ReLU → flatten → dense → ReLU → dense(1).
/// All convolutions use same-padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Side length of the square input grid.
    pub grid: usize,
    pub in_channels: usize,
    pub conv_a: usize,
    pub pointwise: usize,
    pub conv_b: usize,
    pub conv_c: usize,
    pub hidden: usize,
}

/// Which architecture a gradient check runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchitectureKind {
    Full,
    Downsized,
}

impl ArchitectureKind {
    pub fn architecture(self) -> Architecture {
        match self {
            ArchitectureKind::Full => Architecture::FULL,
            ArchitectureKind::Downsized => Architecture::DOWNSIZED,
        }
    }
}

/// Shape of one parameterised layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    /// Weight tensor dimensions, row-major.
    pub weight: Vec<usize>,
    pub bias: usize,
}

impl LayerShape {
    pub fn weight_len(&self) -> usize {
        self.weight.iter().product()
    }

    /// Number of inputs feeding one output unit.
    pub fn fan_in(&self) -> usize {
        let out = *self.weight.last().unwrap_or(&1);
        self.weight_len() / out.max(1)
    }
}

pub const KERNEL: usize = 3;

impl Architecture {
    pub const FULL: Architecture = Architecture {
        grid: 25,
        in_channels: 5,
        conv_a: 8,
        pointwise: 16,
        conv_b: 16,
        conv_c: 8,
        hidden: 32,
    };

    /// Same layer stack on a 7×7 grid, used for finite-difference checks.
    pub const DOWNSIZED: Architecture = Architecture { grid: 7, ..Architecture::FULL };

    pub fn pooled(&self) -> usize {
        self.grid / 2
    }

    pub fn flat_len(&self) -> usize {
        self.pooled() * self.pooled() * self.conv_c
    }

    /// The six parameterised layers in forward order. Convolution weights are
    /// `[ky, kx, in, out]`, dense weights `[in, out]`.
    pub fn layer_shapes(&self) -> [LayerShape; 6] {
        let conv = |name: &str, cin, cout| LayerShape {
            name: name.to_string(),
            weight: vec![KERNEL, KERNEL, cin, cout],
            bias: cout,
        };
        let dense = |name: &str, cin, cout| LayerShape {
            name: name.to_string(),
            weight: vec![cin, cout],
            bias: cout,
        };
        [
            conv("conv_a", self.in_channels, self.conv_a),
            dense("pointwise", self.conv_a, self.pointwise),
            conv("conv_b", self.pointwise, self.conv_b),
            conv("conv_c", self.conv_b, self.conv_c),
            dense("hidden", self.flat_len(), self.hidden),
            dense("output", self.hidden, 1),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|l| l.weight_len() + l.bias).sum()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            self.grid,
            self.in_channels,
            self.conv_a,
            self.pointwise,
            self.conv_b,
            self.conv_c,
            self.hidden,
        ];
        if self.grid < 2 || dims.contains(&0) {
            return Err(ModelError::ShapeMismatch(format!("invalid architecture {self:?}")));
        }
        Ok(())
    }
}
