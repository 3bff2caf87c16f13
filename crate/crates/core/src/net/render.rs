use super::segment::{CoarseResult, FineResult};
use crate::error::{Result, SaversError};
use crate::regions::LabelMap;
use crate::tensor::Tensor;

/// 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    /// Grayscale rendering of the first channel of a `[C,H,W]` image in `[0, 1]`.
    pub fn from_gray(image: &Tensor) -> Result<Self> {
        let (_, h, w) = image.chw()?;
        let pixels = image.data()[..h * w]
            .iter()
            .map(|&v| {
                let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                [g, g, g]
            })
            .collect();
        Ok(RgbImage {
            height: h,
            width: w,
            pixels,
        })
    }

    /// Class colours for every pixel, background in black.
    pub fn from_labels(labels: &LabelMap) -> Self {
        RgbImage {
            height: labels.height(),
            width: labels.width(),
            pixels: labels.data().iter().map(|&c| class_color(c)).collect(),
        }
    }

    /// Overwrites every non-background pixel of `labels` with its class colour.
    pub fn overlay(&self, labels: &LabelMap) -> Result<Self> {
        if labels.shape() != (self.height, self.width) {
            return Err(SaversError::Dimension(format!(
                "label map {:?} does not match image {}x{}",
                labels.shape(),
                self.height,
                self.width
            )));
        }
        let mut out = self.clone();
        for (px, &c) in out.pixels.iter_mut().zip(labels.data()) {
            if c != 0 {
                *px = class_color(c);
            }
        }
        Ok(out)
    }
}

const PALETTE: [[u8; 3]; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [170, 110, 40],
];

/// Fixed colour of class `c`; background is black.
pub fn class_color(c: usize) -> [u8; 3] {
    if c == 0 {
        [0, 0, 0]
    } else {
        PALETTE[(c - 1) % PALETTE.len()]
    }
}

/// Coarse map (one pixel per grid cell), fine map, and the input with the
/// fine detections overlaid.
#[derive(Debug, Clone)]
pub struct SaversRender {
    pub coarse: RgbImage,
    pub fine: RgbImage,
    pub composite: RgbImage,
}

pub fn composite_output(image: &Tensor, fine: &FineResult, coarse: &CoarseResult) -> Result<SaversRender> {
    let base = RgbImage::from_gray(image)?;
    Ok(SaversRender {
        coarse: RgbImage::from_labels(&coarse.cell_predictions()),
        fine: RgbImage::from_labels(&fine.label_map),
        composite: base.overlay(&fine.label_map)?,
    })
}
