use serde::{Deserialize, Serialize};

use super::segment::CoarsePooling;
use crate::error::{Result, SaversError};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaversConfig {
    /// Number of classes including background (index 0).
    pub num_classes: usize,
    /// Output channels of the four conv blocks.
    pub block_channels: [usize; 4],
    /// Output channels of the 4x4 convolution.
    pub mid_channels: usize,
    pub dropout_rate: f64,
    pub input_channels: usize,
    /// Reduction of the coarse grid to a chip-level class.
    pub coarse_pooling: CoarsePooling,
}

impl Default for SaversConfig {
    fn default() -> Self {
        SaversConfig {
            num_classes: 11,
            block_channels: [32, 64, 128, 256],
            mid_channels: 256,
            dropout_rate: 0.5,
            input_channels: 1,
            coarse_pooling: CoarsePooling::Global,
        }
    }
}

impl SaversConfig {
    pub fn with_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = num_classes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(SaversError::Config(format!(
                "num_classes must be >= 2 (background plus one target), got {}",
                self.num_classes
            )));
        }
        if self.block_channels.contains(&0) || self.mid_channels == 0 || self.input_channels == 0 {
            return Err(SaversError::Config(format!("channel counts must be >= 1: {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(SaversError::Config(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if let CoarsePooling::Center { rows, cols } = self.coarse_pooling {
            if rows == 0 || cols == 0 {
                return Err(SaversError::Config("coarse_pooling window must be at least 1x1".into()));
            }
        }
        Ok(())
    }
}
