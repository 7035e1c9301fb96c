use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DEFAULT_DEGREE_EPSILON;
use crate::grm::GrmConfig;
use crate::tensor::GridShape;

/// Encoder levels, at strides 2, 4, 8 and 16.
pub const ENCODER_LEVELS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Side of the square input image.
    pub image_size: usize,
    /// Output channels of each encoder level.
    pub encoder_widths: Vec<usize>,
    /// Channels of the feature-aggregation blocks.
    pub aggregation_channels: usize,
    /// Side of the region grid `R_s`.
    pub region_grid: usize,
    /// Channels of `R_s` (two class logits).
    pub region_channels: usize,
    /// Side of the boundary grid `B_s`.
    pub boundary_grid: usize,
    /// Weight of the boundary loss.
    pub alpha: f64,
    pub learning_rate: f64,
    /// Learning rate after the step decay.
    pub final_learning_rate: f64,
    /// Fraction of the budget after which the final rate applies.
    pub decay_at: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub grm: GrmConfig,
    pub degree_epsilon: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            encoder_widths: vec![8, 16, 16, 16],
            aggregation_channels: 16,
            region_grid: 16,
            region_channels: 2,
            boundary_grid: 32,
            alpha: 1.0,
            learning_rate: 6e-3,
            final_learning_rate: 3.6e-4,
            decay_at: 0.6,
            iterations: 500,
            batch_size: 8,
            seed: 7,
            grm: GrmConfig::default(),
            degree_epsilon: DEFAULT_DEGREE_EPSILON,
        }
    }
}

impl PipelineConfig {
    /// A 32×32 configuration whose region grid has 64 vertices.
    pub fn tiny() -> Self {
        Self {
            image_size: 32,
            encoder_widths: vec![4, 4, 4, 4],
            aggregation_channels: 4,
            region_grid: 8,
            boundary_grid: 16,
            ..Self::default()
        }
    }

    pub fn image_grid(&self) -> GridShape {
        GridShape::square(self.image_size)
    }

    pub fn region_shape(&self) -> GridShape {
        GridShape::square(self.region_grid)
    }

    pub fn boundary_shape(&self) -> GridShape {
        GridShape::square(self.boundary_grid)
    }

    /// Grid of encoder level `k` (0-based, stride `2^(k+1)`).
    pub fn level_grid(&self, k: usize) -> GridShape {
        GridShape::square(self.image_size >> (k + 1))
    }

    fn level_of(&self, side: usize) -> Option<usize> {
        (0..ENCODER_LEVELS).find(|&k| self.image_size >> (k + 1) == side)
    }

    /// Encoder level the region grid sits on.
    pub fn region_level(&self) -> usize {
        self.level_of(self.region_grid).expect("validated config")
    }

    /// Encoder level the boundary grid sits on.
    pub fn boundary_level(&self) -> usize {
        self.level_of(self.boundary_grid).expect("validated config")
    }

    /// Learning rate for 0-based iteration `it`.
    pub fn learning_rate_at(&self, it: usize) -> f64 {
        if (it as f64) < self.decay_at * self.iterations as f64 {
            self.learning_rate
        } else {
            self.final_learning_rate
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        let s = self.image_size;
        if s < 16 || !s.is_multiple_of(16) {
            return bad(format!("image_size {s} must be a multiple of 16"));
        }
        if self.encoder_widths.len() != ENCODER_LEVELS || self.encoder_widths.contains(&0) {
            return bad(format!(
                "encoder_widths needs {ENCODER_LEVELS} positive entries, got {:?}",
                self.encoder_widths
            ));
        }
        if self.aggregation_channels == 0 {
            return bad("aggregation_channels must be positive".into());
        }
        if self.region_channels != 2 {
            return bad(format!(
                "region_channels must be 2 (class logits), got {}",
                self.region_channels
            ));
        }
        if self.boundary_grid != 2 * self.region_grid {
            return bad(format!(
                "boundary_grid {} must be twice region_grid {}",
                self.boundary_grid, self.region_grid
            ));
        }
        match self.level_of(self.region_grid) {
            Some(1) | Some(2) => {}
            _ => {
                return bad(format!(
                    "region_grid {} must be image_size/4 or image_size/8",
                    self.region_grid
                ))
            }
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha {} must be a finite value ≥ 0", self.alpha));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("final_learning_rate", self.final_learning_rate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} {v} must be a finite value ≥ 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.decay_at) {
            return bad(format!("decay_at {} must lie in [0, 1]", self.decay_at));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.degree_epsilon > 0.0) {
            return bad(format!(
                "degree_epsilon {} must be positive",
                self.degree_epsilon
            ));
        }
        self.grm.validate()
    }
}
