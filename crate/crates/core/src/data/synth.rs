//! Synthetic SAR-like chips with exact ground truth.
//!
//! Background is exponentially distributed speckle. A target is a bright
//! class-specific footprint with a darker shadow region below it. Clutter
//! chips (class 0) carry a few small bright blobs that are not targets.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::chip::{ChipRecord, LabelImage};
use crate::error::{Result, SaversError};
use crate::net::GRID;
use crate::regions::LabelMap;
use crate::rng::{stream_rng, Stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapeKind {
    Rectangle,
    LShape,
    TShape,
    Disc,
    Bar,
}

const SHAPES: [ShapeKind; 5] = [
    ShapeKind::Rectangle,
    ShapeKind::LShape,
    ShapeKind::TShape,
    ShapeKind::Disc,
    ShapeKind::Bar,
];

impl ShapeKind {
    /// Membership test in the shape's own frame, unit half-extent.
    fn contains(self, u: f64, v: f64) -> bool {
        match self {
            ShapeKind::Rectangle => u.abs() <= 1.0 && v.abs() <= 0.55,
            ShapeKind::LShape => {
                ((u + 0.45).abs() <= 0.55 && v.abs() <= 1.0) || ((v - 0.45).abs() <= 0.55 && u.abs() <= 1.0)
            }
            ShapeKind::TShape => {
                ((v + 0.6).abs() <= 0.4 && u.abs() <= 1.0) || (u.abs() <= 0.35 && v.abs() <= 1.0)
            }
            ShapeKind::Disc => u * u + v * v <= 0.85 * 0.85,
            ShapeKind::Bar => u.abs() <= 1.0 && v.abs() <= 0.28,
        }
    }
}

/// Footprint of a class: `None` for background.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassTemplate {
    pub class_id: usize,
    pub shape: Option<ShapeKind>,
    pub rotation_deg: f64,
}

impl ClassTemplate {
    /// Classes 1..=5 get distinct shapes; further classes reuse them at a
    /// different orientation. The bar is always tilted.
    pub fn for_class(class_id: usize) -> Self {
        if class_id == 0 {
            return ClassTemplate {
                class_id,
                shape: None,
                rotation_deg: 0.0,
            };
        }
        let shape = SHAPES[(class_id - 1) % SHAPES.len()];
        let mut rotation_deg = 45.0 * ((class_id - 1) / SHAPES.len()) as f64;
        if shape == ShapeKind::Bar {
            rotation_deg += 35.0;
        }
        ClassTemplate {
            class_id,
            shape: Some(shape),
            rotation_deg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthOptions {
    /// Mean speckle amplitude.
    pub background_mean: f64,
    /// Target mean amplitude as a multiple of `background_mean`.
    pub target_contrast: f64,
    /// Multiplier applied to speckle inside the shadow.
    pub shadow_factor: f64,
    /// Target half-extent as a fraction of the chip size.
    pub extent_fraction: f64,
    /// Maximum centre offset as a fraction of the chip size.
    pub jitter_fraction: f64,
    /// Upper bound on bright non-target blobs in clutter chips.
    pub max_clutter_blobs: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            background_mean: 0.1,
            target_contrast: 3.0,
            shadow_factor: 0.25,
            extent_fraction: 0.4,
            jitter_fraction: 0.21875,
            max_clutter_blobs: 3,
        }
    }
}

/// Exact footprint mask of `template` centred at `(cy, cx)` with half-extent `radius`.
pub fn footprint(template: &ClassTemplate, h: usize, w: usize, cy: f64, cx: f64, radius: f64) -> Vec<bool> {
    let Some(shape) = template.shape else {
        return vec![false; h * w];
    };
    let (sin, cos) = template.rotation_deg.to_radians().sin_cos();
    (0..h * w)
        .map(|i| {
            let (dy, dx) = ((i / w) as f64 - cy, (i % w) as f64 - cx);
            let u = (dx * cos + dy * sin) / radius;
            let v = (-dx * sin + dy * cos) / radius;
            shape.contains(u, v)
        })
        .collect()
}

pub fn synth_chip(
    template: &ClassTemplate,
    size: usize,
    num_classes: usize,
    seed: u64,
) -> Result<(ChipRecord, LabelImage)> {
    synth_chip_with(template, size, num_classes, seed, &SynthOptions::default())
}

pub fn synth_chip_with(
    template: &ClassTemplate,
    size: usize,
    num_classes: usize,
    seed: u64,
    opts: &SynthOptions,
) -> Result<(ChipRecord, LabelImage)> {
    if size == 0 || !size.is_multiple_of(GRID) {
        return Err(SaversError::Config(format!("chip size must be a positive multiple of {GRID}, got {size}")));
    }
    if template.class_id >= num_classes {
        return Err(SaversError::Config(format!(
            "class {} outside 0..{num_classes}",
            template.class_id
        )));
    }
    let mut rng = stream_rng(seed, Stream::Data);
    let n = size * size;
    let jitter = (opts.jitter_fraction * size as f64).floor() as i64;
    let mut offset = || if jitter > 0 { rng.random_range(-jitter..=jitter) } else { 0 };
    let (jy, jx) = (offset(), offset());
    let aspect_deg = rng.random_range(0.0..360.0);
    let center = size as f64 / 2.0 - 0.5;
    let (cy, cx) = (center + jy as f64, center + jx as f64);
    let radius = opts.extent_fraction * size as f64;

    let mask = footprint(template, size, size, cy, cx, radius);
    let shadow_shift = (0.7 * radius).round() as usize;
    let shadow: Vec<bool> = (0..n)
        .map(|i| {
            let (r, c) = (i / size, i % size);
            !mask[i] && r >= shadow_shift && mask[(r - shadow_shift) * size + c]
        })
        .collect();

    let mut blobs = Vec::new();
    if template.shape.is_none() && opts.max_clutter_blobs > 0 {
        let count = rng.random_range(0..=opts.max_clutter_blobs);
        for _ in 0..count {
            let r = rng.random_range(1.0..3.5);
            let y = rng.random_range(0.0..size as f64);
            let x = rng.random_range(0.0..size as f64);
            blobs.push((y, x, r));
        }
    }

    let mean = opts.background_mean;
    let data: Vec<f64> = (0..n)
        .map(|i| {
            let e: f64 = Exp1.sample(&mut rng);
            let (r, c) = ((i / size) as f64, (i % size) as f64);
            let v = if mask[i] {
                mean * opts.target_contrast * (0.5 + 0.5 * e)
            } else if shadow[i] {
                mean * opts.shadow_factor * e
            } else if blobs.iter().any(|&(y, x, rad)| (r - y).powi(2) + (c - x).powi(2) <= rad * rad) {
                mean * 2.0 * (0.5 + 0.5 * e)
            } else {
                mean * e
            };
            v.clamp(0.0, 1.0)
        })
        .collect();

    let chip = ChipRecord {
        image: Tensor::new(vec![1, size, size], data)?,
        class_id: template.class_id,
        depression_deg: 17.0,
        aspect_deg,
        source_name: format!("synth_c{:02}_{seed:016x}", template.class_id),
    };
    let labels = LabelMap::new(
        size,
        size,
        mask.iter().map(|&m| if m { template.class_id } else { 0 }).collect(),
    )?;
    Ok((chip, LabelImage::new(labels, num_classes)?))
}
