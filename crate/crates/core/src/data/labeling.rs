//! Label images for chips that come without ground truth.

use serde::{Deserialize, Serialize};

use super::chip::{ChipRecord, LabelImage};
use crate::error::{Result, SaversError};
use crate::regions::{regions, LabelMap};

/// Threshold-and-close annotation rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelPolicy {
    /// Fraction of the chip maximum a pixel must reach to seed the mask.
    pub threshold: f64,
    /// Radius of the disc used for morphological closing; 0 disables it.
    pub closing_radius: usize,
}

impl Default for LabelPolicy {
    fn default() -> Self {
        LabelPolicy {
            threshold: 0.4,
            closing_radius: 2,
        }
    }
}

fn disc(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut offsets = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dy * dy + dx * dx <= r * r {
                offsets.push((dy, dx));
            }
        }
    }
    offsets
}

/// Dilation followed by erosion with a disc; pixels outside the image count
/// as set during erosion so the closing never shrinks the mask at borders.
pub fn close_mask(mask: &[bool], h: usize, w: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return mask.to_vec();
    }
    let offsets = disc(radius);
    let sample = |m: &[bool], r: usize, c: usize, dy: isize, dx: isize, outside: bool| {
        let (y, x) = (r as isize + dy, c as isize + dx);
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            outside
        } else {
            m[y as usize * w + x as usize]
        }
    };
    let dilated: Vec<bool> = (0..h * w)
        .map(|i| offsets.iter().any(|&(dy, dx)| sample(mask, i / w, i % w, dy, dx, false)))
        .collect();
    (0..h * w)
        .map(|i| offsets.iter().all(|&(dy, dx)| sample(&dilated, i / w, i % w, dy, dx, true)))
        .collect()
}

/// Clutter chips become all-background; target chips keep the largest
/// 8-connected component of the closed threshold mask, labelled with the
/// chip's class.
pub fn make_label_image(chip: &ChipRecord, policy: &LabelPolicy, num_classes: usize) -> Result<LabelImage> {
    let (h, w) = (chip.height(), chip.width());
    if chip.class_id >= num_classes {
        return Err(SaversError::Data(format!(
            "chip {} has class {} but only {num_classes} classes exist",
            chip.source_name, chip.class_id
        )));
    }
    if chip.class_id == 0 {
        return Ok(LabelImage::background(h, w, num_classes));
    }
    let cutoff = policy.threshold * chip.max_amplitude();
    let seeded: Vec<bool> = chip.image.data().iter().map(|&v| v >= cutoff && v > 0.0).collect();
    if !seeded.iter().any(|&b| b) {
        return Err(SaversError::EmptyMask(format!(
            "no pixel of {} reaches {} of the chip maximum",
            chip.source_name, policy.threshold
        )));
    }
    let closed = close_mask(&seeded, h, w, policy.closing_radius);
    let binary = LabelMap::new(h, w, closed.iter().map(|&b| b as usize).collect())?;
    let largest = regions(&binary)
        .into_iter()
        .max_by(|a, b| a.pixels.len().cmp(&b.pixels.len()).then(b.pixels[0].cmp(&a.pixels[0])))
        .expect("non-empty mask has a region");
    let mut labels = LabelMap::filled(h, w, 0);
    for (r, c) in largest.pixels {
        labels.set(r, c, chip.class_id);
    }
    LabelImage::new(labels, num_classes)
}
