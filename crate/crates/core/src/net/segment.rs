//! Inference products: coarse (per-cell) and fine (per-pixel) segmentation
//! and the target list derived from the fine map.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::model::{SaversModel, GRID};
use crate::error::{Result, SaversError};
use crate::kernel::{avgpool, softmax};
use crate::regions::{regions, LabelMap};
use crate::tensor::Tensor;

/// Default minimum component size kept by [`detect_targets`].
pub const DEFAULT_MIN_PIXELS: usize = 8;

/// How the coarse grid is reduced to a chip-level score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarsePooling {
    /// Mean over every cell.
    #[default]
    Global,
    /// Mean over the central `rows x cols` cells (clamped to the grid).
    Center { rows: usize, cols: usize },
}

#[derive(Debug, Clone)]
pub struct CoarseResult {
    /// Per-cell logits before pooling, `[N_c, G_h, G_w]`.
    pub logit_grid: Tensor,
    /// `[N_c]`
    pub pooled_logits: Tensor,
    /// `[N_c]`, softmax of `pooled_logits`.
    pub pooled_probs: Tensor,
    pub predicted_class: usize,
}

impl CoarseResult {
    pub fn from_grid(logit_grid: Tensor, pooling: CoarsePooling) -> Result<Self> {
        let (n, gh, gw) = logit_grid.chw()?;
        let pooled = match pooling {
            CoarsePooling::Global => avgpool(&logit_grid)?,
            CoarsePooling::Center { rows, cols } => {
                let (rows, cols) = (rows.clamp(1, gh), cols.clamp(1, gw));
                let (r0, c0) = ((gh - rows) / 2, (gw - cols) / 2);
                let window = Tensor::from_fn(&[n, rows, cols], |i| {
                    let (k, r, c) = (i / (rows * cols), (i / cols) % rows, i % cols);
                    logit_grid.at3(k, r0 + r, c0 + c)
                });
                avgpool(&window)?
            }
        };
        let pooled_logits = pooled.reshape(&[n])?;
        let pooled_probs = softmax(&pooled_logits);
        let predicted_class = argmax(pooled_probs.data());
        Ok(CoarseResult {
            logit_grid,
            pooled_logits,
            pooled_probs,
            predicted_class,
        })
    }

    /// Probability of the background class.
    pub fn background_prob(&self) -> f64 {
        self.pooled_probs.data()[0]
    }

    /// Per-cell argmax of the un-pooled logits.
    pub fn cell_predictions(&self) -> LabelMap {
        class_argmax(&self.logit_grid)
    }
}

#[derive(Debug, Clone)]
pub struct FineResult {
    /// `[N_c, H, W]`
    pub score_map: Tensor,
    /// `H x W` per-pixel argmax of `score_map`.
    pub label_map: LabelMap,
}

/// Undoes [`pad_to_grid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRecord {
    pub height: usize,
    pub width: usize,
    pub padded_height: usize,
    pub padded_width: usize,
}

impl CropRecord {
    pub fn is_identity(&self) -> bool {
        self.height == self.padded_height && self.width == self.padded_width
    }

    /// Crops a `[C, padded_h, padded_w]` tensor back to `[C, h, w]`.
    pub fn crop(&self, t: &Tensor) -> Result<Tensor> {
        let (c, h, w) = t.chw()?;
        if (h, w) != (self.padded_height, self.padded_width) {
            return Err(SaversError::Dimension(format!(
                "cannot crop {:?} with record for {}x{}",
                t.shape(),
                self.padded_height,
                self.padded_width
            )));
        }
        Ok(Tensor::from_fn(&[c, self.height, self.width], |i| {
            let (k, r, col) = (i / (self.height * self.width), (i / self.width) % self.height, i % self.width);
            t.at3(k, r, col)
        }))
    }
}

fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

/// Reflect-pads the bottom and right edges up to the next multiple of 16.
pub fn pad_to_grid(image: &Tensor) -> Result<(Tensor, CropRecord)> {
    let (c, h, w) = image.chw()?;
    let ph = h.div_ceil(GRID) * GRID;
    let pw = w.div_ceil(GRID) * GRID;
    let record = CropRecord {
        height: h,
        width: w,
        padded_height: ph,
        padded_width: pw,
    };
    if record.is_identity() {
        return Ok((image.clone(), record));
    }
    let padded = Tensor::from_fn(&[c, ph, pw], |i| {
        let (k, r, col) = (i / (ph * pw), (i / pw) % ph, i % pw);
        image.at3(k, reflect(r, h), reflect(col, w))
    });
    Ok((padded, record))
}

/// First index of the maximum.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-position argmax over the class axis of a `[N_c, H, W]` tensor.
pub fn class_argmax(scores: &Tensor) -> LabelMap {
    let (n, h, w) = scores.chw().expect("class scores are [N_c, H, W]");
    let plane = h * w;
    let data = scores.data();
    let labels = (0..plane)
        .map(|p| {
            let mut best = 0;
            for k in 1..n {
                if data[k * plane + p] > data[best * plane + p] {
                    best = k;
                }
            }
            best
        })
        .collect();
    LabelMap::new(h, w, labels).expect("plane size matches")
}

impl SaversModel {
    /// Coarse segmentation pooled with the configured window.
    pub fn coarse_segment(&self, image: &Tensor) -> Result<CoarseResult> {
        self.coarse_segment_with(image, self.config().coarse_pooling)
    }

    /// Coarse segmentation of any image of at least one pixel; the image is
    /// reflect-padded to the 16-pixel grid first.
    pub fn coarse_segment_with(&self, image: &Tensor, pooling: CoarsePooling) -> Result<CoarseResult> {
        let (padded, _) = pad_to_grid(image)?;
        CoarseResult::from_grid(self.encode(&padded)?, pooling)
    }

    /// Fine segmentation in eval mode, cropped back to the input extent.
    pub fn fine_segment(&self, image: &Tensor) -> Result<FineResult> {
        Ok(self.segment(image)?.1)
    }

    /// Coarse and fine outputs from a single encoder pass.
    pub fn segment(&self, image: &Tensor) -> Result<(CoarseResult, FineResult)> {
        let (padded, crop) = pad_to_grid(image)?;
        let grid = self.encode(&padded)?;
        let scores = crop.crop(&self.decode(&grid)?)?;
        let label_map = class_argmax(&scores);
        let coarse = CoarseResult::from_grid(grid, self.config().coarse_pooling)?;
        Ok((
            coarse,
            FineResult {
                score_map: scores,
                label_map,
            },
        ))
    }
}

/// One connected target in a fine label map.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectedTarget {
    pub class_id: usize,
    pub pixel_mask: Vec<(usize, usize)>,
    /// Sub-pixel `(row, col)` mean of the mask.
    pub centroid: (f64, f64),
    pub pixel_count: usize,
}

/// 8-connected same-class components of non-background pixels with at
/// least `min_pixels` pixels, largest first; equal sizes are ordered by
/// centroid `(row, col)`.
pub fn detect_targets(label_map: &LabelMap, min_pixels: usize) -> Vec<DetectedTarget> {
    let mut targets: Vec<DetectedTarget> = regions(label_map)
        .into_iter()
        .filter(|r| r.pixels.len() >= min_pixels.max(1))
        .map(|r| {
            let centroid = r.centroid();
            let mut pixel_mask = r.pixels;
            pixel_mask.sort_unstable();
            DetectedTarget {
                class_id: r.class_id,
                pixel_count: pixel_mask.len(),
                pixel_mask,
                centroid,
            }
        })
        .collect();
    targets.sort_by(|a, b| {
        b.pixel_count.cmp(&a.pixel_count).then_with(|| {
            a.centroid
                .0
                .partial_cmp(&b.centroid.0)
                .unwrap_or(Ordering::Equal)
                .then(a.centroid.1.partial_cmp(&b.centroid.1).unwrap_or(Ordering::Equal))
        })
    });
    targets
}
