//! Multi-target scene composition.

use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::chip::{LabelImage, LabeledChip};
use super::synth::{synth_chip, ClassTemplate, SynthOptions};
use crate::error::{Result, SaversError};
use crate::net::GRID;
use crate::regions::LabelMap;
use crate::rng::{stream_rng, Stream};
use crate::tensor::Tensor;

/// What fills the canvas before chips are placed.
#[derive(Debug, Clone, PartialEq)]
pub enum SceneBackground {
    /// Exponential speckle with the given mean.
    Speckle { seed: u64, mean: f64 },
    /// A clutter image, tiled if smaller than the canvas.
    Clutter(Tensor),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    /// Index into the chip list passed to [`compose_scene`].
    pub chip: usize,
    pub top: usize,
    pub left: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub canvas_h: usize,
    pub canvas_w: usize,
    pub placements: Vec<Placement>,
    pub background: SceneBackground,
}

fn background_canvas(spec: &SceneSpec) -> Result<Vec<f64>> {
    let (h, w) = (spec.canvas_h, spec.canvas_w);
    match &spec.background {
        SceneBackground::Speckle { seed, mean } => {
            let mut rng = stream_rng(*seed, Stream::Scene);
            Ok((0..h * w)
                .map(|_| {
                    let e: f64 = Exp1.sample(&mut rng);
                    (mean * e).clamp(0.0, 1.0)
                })
                .collect())
        }
        SceneBackground::Clutter(img) => {
            let (_, ch, cw) = img.chw()?;
            Ok((0..h * w).map(|i| img.data()[((i / w) % ch) * cw + (i % w) % cw]).collect())
        }
    }
}

/// Target-mask pixels are copied from the chip; other chip pixels are
/// merged by maximum, except over pixels already claimed by a target.
pub fn compose_scene(spec: &SceneSpec, chips: &[LabeledChip], num_classes: usize) -> Result<(Tensor, LabelImage)> {
    let (h, w) = (spec.canvas_h, spec.canvas_w);
    if h == 0 || w == 0 || h % GRID != 0 || w % GRID != 0 {
        return Err(SaversError::Config(format!(
            "canvas {h}x{w} must be a positive multiple of {GRID} on both sides"
        )));
    }
    let mut image = background_canvas(spec)?;
    let mut labels = vec![0usize; h * w];
    for (index, p) in spec.placements.iter().enumerate() {
        let chip = chips.get(p.chip).ok_or_else(|| SaversError::Placement {
            index,
            message: format!("chip reference {} but only {} chips given", p.chip, chips.len()),
        })?;
        let (ch, cw) = (chip.chip.height(), chip.chip.width());
        if p.top + ch > h || p.left + cw > w {
            return Err(SaversError::Placement {
                index,
                message: format!(
                    "{ch}x{cw} chip at ({}, {}) leaves the {h}x{w} canvas",
                    p.top, p.left
                ),
            });
        }
        if chip.label.labels.data().iter().any(|&c| c >= num_classes) {
            return Err(SaversError::Placement {
                index,
                message: format!("chip labels exceed {num_classes} classes"),
            });
        }
        let src = chip.chip.image.data();
        let lab = chip.label.labels.data();
        for r in 0..ch {
            for c in 0..cw {
                let dst = (p.top + r) * w + p.left + c;
                let s = r * cw + c;
                if lab[s] != 0 {
                    if labels[dst] != 0 {
                        return Err(SaversError::Placement {
                            index,
                            message: format!("target overlaps an earlier target at ({}, {})", p.top + r, p.left + c),
                        });
                    }
                    image[dst] = src[s];
                    labels[dst] = lab[s];
                } else if labels[dst] == 0 {
                    image[dst] = image[dst].max(src[s]);
                }
            }
        }
    }
    Ok((
        Tensor::new(vec![1, h, w], image)?,
        LabelImage::new(LabelMap::new(h, w, labels)?, num_classes)?,
    ))
}

/// Where a placed chip comes from in a scene file.
#[derive(Debug, Clone, PartialEq)]
pub enum ChipSource {
    Synthetic { class_id: usize, seed: u64, size: usize },
    File { chip: PathBuf, label: PathBuf },
}

/// One placement in a scene file: either `class_id` (with optional `seed`
/// and `size`) for a synthetic chip, or `chip` and `label` PGM paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementFile {
    pub top: usize,
    pub left: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_id: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chip: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<PathBuf>,
}

impl PlacementFile {
    pub fn source(&self, index: usize) -> Result<ChipSource> {
        let bad = |message: &str| SaversError::Placement {
            index,
            message: message.to_string(),
        };
        match (self.class_id, &self.chip, &self.label) {
            (Some(class_id), None, None) => Ok(ChipSource::Synthetic {
                class_id,
                seed: self.seed.unwrap_or(index as u64),
                size: self.size.unwrap_or(64),
            }),
            (None, Some(chip), Some(label)) if self.seed.is_none() && self.size.is_none() => Ok(ChipSource::File {
                chip: chip.clone(),
                label: label.clone(),
            }),
            (None, Some(_), None) => Err(bad("chip path given without a label path")),
            _ => Err(bad("placement needs either class_id or chip and label paths")),
        }
    }
}

fn default_mean() -> f64 {
    SynthOptions::default().background_mean
}

/// JSON scene description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub canvas_h: usize,
    pub canvas_w: usize,
    #[serde(default)]
    pub placements: Vec<PlacementFile>,
    /// Seed of the speckle background; ignored when `clutter` is set.
    #[serde(default)]
    pub background_seed: u64,
    #[serde(default = "default_mean")]
    pub background_mean: f64,
    /// Optional clutter PGM tiled under the placements.
    #[serde(default)]
    pub clutter: Option<PathBuf>,
}

impl SceneFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Resolves chip sources (relative paths against `base`) and composes.
    pub fn compose(&self, base: &Path, num_classes: usize) -> Result<(Tensor, LabelImage)> {
        let mut chips = Vec::with_capacity(self.placements.len());
        let mut placements = Vec::with_capacity(self.placements.len());
        for (index, p) in self.placements.iter().enumerate() {
            let chip = match p.source(index)? {
                ChipSource::Synthetic { class_id, seed, size } => {
                    let (c, l) = synth_chip(&ClassTemplate::for_class(class_id), size, num_classes, seed)
                        .map_err(|e| SaversError::Placement { index, message: e.to_string() })?;
                    LabeledChip::new(c, l)?
                }
                ChipSource::File { chip, label } => super::load_labeled_pgm(&base.join(&chip), &base.join(&label), num_classes)?,
            };
            chips.push(chip);
            placements.push(Placement {
                chip: index,
                top: p.top,
                left: p.left,
            });
        }
        let background = match &self.clutter {
            Some(path) => SceneBackground::Clutter(super::pgm::read_pgm(&base.join(path))?.to_image()?),
            None => SceneBackground::Speckle {
                seed: self.background_seed,
                mean: self.background_mean,
            },
        };
        let spec = SceneSpec {
            canvas_h: self.canvas_h,
            canvas_w: self.canvas_w,
            placements,
            background,
        };
        compose_scene(&spec, &chips, num_classes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn speckle(h: usize, w: usize) -> SceneSpec {
        SceneSpec {
            canvas_h: h,
            canvas_w: w,
            placements: vec![],
            background: SceneBackground::Speckle { seed: 1, mean: 0.1 },
        }
    }

    fn chip(class_id: usize, seed: u64) -> LabeledChip {
        let (c, l) = synth_chip(&ClassTemplate::for_class(class_id), 32, 6, seed).unwrap();
        LabeledChip::new(c, l).unwrap()
    }

    #[test]
    fn empty_scene_is_background() {
        let (img, labels) = compose_scene(&speckle(32, 48), &[], 6).unwrap();
        assert_eq!(img.shape(), &[1, 32, 48]);
        assert_eq!(labels.labels.count_nonzero(), 0);
    }

    #[test]
    fn out_of_bounds_names_index() {
        let mut spec = speckle(64, 64);
        spec.placements = vec![
            Placement { chip: 0, top: 0, left: 0 },
            Placement { chip: 0, top: 40, left: 0 },
        ];
        match compose_scene(&spec, &[chip(1, 1)], 6) {
            Err(SaversError::Placement { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overlapping_targets_rejected() {
        let mut spec = speckle(64, 64);
        spec.placements = vec![
            Placement { chip: 0, top: 0, left: 0 },
            Placement { chip: 1, top: 2, left: 2 },
        ];
        assert!(matches!(
            compose_scene(&spec, &[chip(1, 1), chip(2, 2)], 6),
            Err(SaversError::Placement { index: 1, .. })
        ));
    }

    #[test]
    fn scene_file_parses() {
        let text = r#"{"canvas_h":32,"canvas_w":32,"placements":[{"class_id":2,"seed":3,"size":32,"top":0,"left":0}]}"#;
        let scene = SceneFile::from_json(text).unwrap();
        let (_, labels) = scene.compose(Path::new("."), 6).unwrap();
        assert!(labels.labels.count_nonzero() > 0);
        assert!(SceneFile::from_json(r#"{"canvas_h":32,"canvas_w":32,"bogus":1}"#).is_err());
    }
}
