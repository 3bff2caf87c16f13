//! Synthetic datasets in memory and on disk.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::chip::LabeledChip;
use super::manifest::{DatasetManifest, ManifestEntry, Split};
use super::pgm::{write_image_pgm, write_labels_pgm};
use super::synth::{synth_chip, ClassTemplate};
use crate::error::{Result, SaversError};
use crate::net::GRID;
use crate::rng::sub_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthDatasetConfig {
    /// Target classes; class ids run `1..=classes`.
    pub classes: usize,
    pub per_class: usize,
    /// Clutter chips; `None` means `per_class`.
    pub clutter: Option<usize>,
    pub size: usize,
    /// Every `test_every`-th chip of a class goes to the test split.
    pub test_every: usize,
}

impl Default for SynthDatasetConfig {
    fn default() -> Self {
        SynthDatasetConfig {
            classes: 4,
            per_class: 50,
            clutter: None,
            size: 64,
            test_every: 5,
        }
    }
}

impl SynthDatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || !self.size.is_multiple_of(GRID) {
            return Err(SaversError::Config(format!(
                "size must be a positive multiple of {GRID}, got {}",
                self.size
            )));
        }
        if self.classes == 0 || self.per_class == 0 {
            return Err(SaversError::Config("classes and per_class must be >= 1".into()));
        }
        if self.test_every < 2 {
            return Err(SaversError::Config("test_every must be >= 2".into()));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.classes + 1
    }

    fn count(&self, class_id: usize) -> usize {
        if class_id == 0 {
            self.clutter.unwrap_or(self.per_class)
        } else {
            self.per_class
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        std::iter::once("Background".to_string())
            .chain((1..=self.classes).map(|k| format!("Target{k}")))
            .collect()
    }
}

/// One generated chip and where it belongs.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub split: Split,
    /// Relative path of the chip in the on-disk layout.
    pub path: PathBuf,
    pub sample: LabeledChip,
}

/// Chips in class order, then index order.
pub fn synthetic_dataset(cfg: &SynthDatasetConfig, seed: u64) -> Result<Vec<SynthSample>> {
    cfg.validate()?;
    let n = cfg.num_classes();
    let mut out = Vec::new();
    for class_id in 0..n {
        let class_seed = sub_seed(seed, class_id as u64);
        let template = ClassTemplate::for_class(class_id);
        for i in 0..cfg.count(class_id) {
            let (chip, label) = synth_chip(&template, cfg.size, n, sub_seed(class_seed, i as u64))?;
            let split = if i % cfg.test_every == cfg.test_every - 1 { Split::Test } else { Split::Train };
            out.push(SynthSample {
                split,
                path: PathBuf::from(format!("{split}/c{class_id:02}/chip_{i:04}.pgm")),
                sample: LabeledChip::new(chip, label)?,
            });
        }
    }
    Ok(out)
}

fn label_path(p: &Path) -> PathBuf {
    p.with_extension("label.pgm")
}

/// Writes chips, label images, `classes.txt` and `manifest.csv` under
/// `root`. The manifest is written last through a temporary file.
pub fn write_synthetic_dataset(root: &Path, cfg: &SynthDatasetConfig, seed: u64) -> Result<DatasetManifest> {
    let samples = synthetic_dataset(cfg, seed)?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in &samples {
        let path = root.join(&s.path);
        let dir = path.parent().expect("chip path has a parent");
        std::fs::create_dir_all(dir).map_err(|e| SaversError::io(dir, e))?;
        write_image_pgm(&path, &s.sample.chip.image)?;
        write_labels_pgm(&label_path(&path), &s.sample.label.labels)?;
        entries.push(ManifestEntry {
            path: s.path.clone(),
            label_path: Some(label_path(&s.path)),
            class_id: s.sample.chip.class_id,
            split: s.split,
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = DatasetManifest {
        entries,
        class_names: cfg.class_names(),
    };
    let classes = root.join("classes.txt");
    std::fs::write(&classes, manifest.classes_txt()).map_err(|e| SaversError::io(&classes, e))?;
    write_manifest(&manifest, &root.join("manifest.csv"))?;
    Ok(manifest)
}

/// Writes `path` through `path.tmp` and a rename.
pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    std::fs::write(&tmp, manifest.to_csv()?).map_err(|e| SaversError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| SaversError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_split() {
        let cfg = SynthDatasetConfig {
            classes: 2,
            per_class: 10,
            clutter: Some(5),
            size: 16,
            test_every: 5,
        };
        let s = synthetic_dataset(&cfg, 1).unwrap();
        assert_eq!(s.len(), 25);
        assert_eq!(s.iter().filter(|x| x.split == Split::Test).count(), 2 + 2 + 1);
        assert!(synthetic_dataset(&SynthDatasetConfig { size: 60, ..cfg }, 1).is_err());
    }
}
