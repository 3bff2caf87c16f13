use crate::error::{Result, SaversError};
use crate::regions::LabelMap;
use crate::tensor::Tensor;

/// One SAR image chip and its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipRecord {
    /// `[1, H, W]` amplitude in `[0, 1]`.
    pub image: Tensor,
    /// 0 is background/clutter.
    pub class_id: usize,
    pub depression_deg: f64,
    /// In `[0, 360)`.
    pub aspect_deg: f64,
    pub source_name: String,
}

impl ChipRecord {
    pub fn height(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }

    pub fn max_amplitude(&self) -> f64 {
        self.image.data().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-pixel ground truth for one chip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    pub labels: LabelMap,
    pub num_classes: usize,
}

impl LabelImage {
    pub fn new(labels: LabelMap, num_classes: usize) -> Result<Self> {
        if let Some((i, &v)) = labels.data().iter().enumerate().find(|(_, &v)| v >= num_classes) {
            return Err(SaversError::Data(format!(
                "label {v} at pixel ({}, {}) is not below {num_classes}",
                i / labels.width(),
                i % labels.width()
            )));
        }
        Ok(LabelImage { labels, num_classes })
    }

    pub fn background(height: usize, width: usize, num_classes: usize) -> Self {
        LabelImage {
            labels: LabelMap::filled(height, width, 0),
            num_classes,
        }
    }
}

/// A chip with its label image, as consumed by training and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledChip {
    pub chip: ChipRecord,
    pub label: LabelImage,
}

impl LabeledChip {
    pub fn new(chip: ChipRecord, label: LabelImage) -> Result<Self> {
        if label.labels.shape() != (chip.height(), chip.width()) {
            return Err(SaversError::Dimension(format!(
                "label image {:?} does not match chip {}x{} ({})",
                label.labels.shape(),
                chip.height(),
                chip.width(),
                chip.source_name
            )));
        }
        Ok(LabeledChip { chip, label })
    }
}
