//! Chip ingestion, label images, manifests, synthetic data and scenes.

mod chip;
mod dataset;
mod header;
mod labeling;
mod manifest;
pub mod pgm;
mod scene;
mod synth;

use std::path::Path;

pub use chip::{ChipRecord, LabelImage, LabeledChip};
pub use dataset::{synthetic_dataset, write_manifest, write_synthetic_dataset, SynthDatasetConfig, SynthSample};
pub use header::{parse_header_chip, write_header_chip, HeaderChip};
pub use labeling::{close_mask, make_label_image, LabelPolicy};
pub use manifest::{
    apply_exclusions, build_manifest, default_exclusions, load_chip_file, load_split, parse_exclusions,
    DatasetManifest, Exclusion, ExclusionOutcome, Layout, ManifestBuild, ManifestEntry, Split, MANIFEST_HEADER,
    MSTAR_CLASSES, MSTAR_COUNTS,
};
pub use pgm::GrayImage;
pub use scene::{compose_scene, ChipSource, Placement, PlacementFile, SceneBackground, SceneFile, SceneSpec};
pub use synth::{footprint, synth_chip, synth_chip_with, ClassTemplate, ShapeKind, SynthOptions};

/// A PGM chip plus its PGM label image. The chip's class is the single
/// non-zero label, or 0 if there is none.
pub fn load_labeled_pgm(chip_path: &Path, label_path: &Path, num_classes: usize) -> crate::Result<LabeledChip> {
    let labels = pgm::read_pgm(label_path)?.to_labels()?;
    let class_id = labels.data().iter().copied().find(|&v| v != 0).unwrap_or(0);
    let chip = load_chip_file(chip_path, class_id)?;
    LabeledChip::new(chip, LabelImage::new(labels, num_classes)?)
}
