//! Dataset manifests: which chip files belong to which class and split.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::chip::{LabelImage, LabeledChip};
use super::header::parse_header_chip;
use super::labeling::{make_label_image, LabelPolicy};
use super::pgm::read_pgm;
use crate::error::{Result, SaversError};

pub const MANIFEST_HEADER: &str = "path,label_path,class_id,split";

/// The eleven classes of the MSTAR/clutter set, background first.
pub const MSTAR_CLASSES: [&str; 11] = [
    "Background", "2S1", "BMP2", "BRDM2", "BTR60", "BTR70", "D7", "T62", "T72", "ZIL131", "ZSU234",
];

/// Published per-class (train, test) chip counts, in [`MSTAR_CLASSES`] order.
pub const MSTAR_COUNTS: [(usize, usize); 11] = [
    (274, 242),
    (299, 274),
    (233, 195),
    (298, 274),
    (256, 190),
    (233, 196),
    (299, 274),
    (299, 273),
    (232, 196),
    (299, 274),
    (299, 274),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = SaversError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(SaversError::Data(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Relative to the dataset root.
    pub path: PathBuf,
    /// `None` when the label image is derived with a [`LabelPolicy`].
    pub label_path: Option<PathBuf>,
    pub class_id: usize,
    pub split: Split,
}

impl ManifestEntry {
    pub fn file_name(&self) -> String {
        self.path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Index 0 is "Background".
    pub class_names: Vec<String>,
}

fn csv_path(p: &Path) -> Result<String> {
    let s = p.to_string_lossy().replace('\\', "/");
    if s.contains(',') || s.contains('\n') {
        return Err(SaversError::Data(format!("path {s:?} cannot be stored in the manifest CSV")));
    }
    Ok(s)
}

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Entry count per class for one split.
    pub fn counts(&self, split: Split) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for e in self.split(split) {
            if e.class_id < counts.len() {
                counts[e.class_id] += 1;
            }
        }
        counts
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = format!("{MANIFEST_HEADER}\n");
        for e in &self.entries {
            let label = match &e.label_path {
                Some(p) => csv_path(p)?,
                None => String::new(),
            };
            out.push_str(&format!("{},{label},{},{}\n", csv_path(&e.path)?, e.class_id, e.split));
        }
        Ok(out)
    }

    pub fn from_csv(text: &str, class_names: Vec<String>) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == MANIFEST_HEADER => {}
            other => {
                return Err(SaversError::Data(format!(
                    "manifest header should be {MANIFEST_HEADER:?}, found {other:?}"
                )))
            }
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let bad = |msg: String| SaversError::Data(format!("manifest line {}: {msg}", i + 2));
            if cols.len() != 4 {
                return Err(bad(format!("expected 4 columns, found {}", cols.len())));
            }
            let class_id: usize = cols[2].trim().parse().map_err(|_| bad(format!("bad class_id {:?}", cols[2])))?;
            if class_id >= class_names.len() {
                return Err(bad(format!("class_id {class_id} but only {} classes", class_names.len())));
            }
            entries.push(ManifestEntry {
                path: PathBuf::from(cols[0].trim()),
                label_path: Some(cols[1].trim()).filter(|s| !s.is_empty()).map(PathBuf::from),
                class_id,
                split: cols[3].trim().parse().map_err(|e: SaversError| bad(e.to_string()))?,
            });
        }
        Ok(DatasetManifest { entries, class_names })
    }

    /// Reads `manifest.csv`-style files; class names come from a sibling
    /// `classes.txt` (one per line) or default to the MSTAR names.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SaversError::io(path, e))?;
        let classes_path = path.with_file_name("classes.txt");
        let class_names = if classes_path.exists() {
            std::fs::read_to_string(&classes_path)
                .map_err(|e| SaversError::io(&classes_path, e))?
                .lines()
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect()
        } else {
            MSTAR_CLASSES.iter().map(|s| s.to_string()).collect()
        };
        Self::from_csv(&text, class_names).map_err(|e| SaversError::Data(format!("{}: {e}", path.display())))
    }

    pub fn classes_txt(&self) -> String {
        self.class_names.iter().map(|n| format!("{n}\n")).collect()
    }
}

/// A (class name, file name) pair to drop from the test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exclusion {
    pub class_name: String,
    pub filename: String,
}

impl Exclusion {
    pub fn new(class_name: &str, filename: &str) -> Self {
        Exclusion {
            class_name: class_name.to_string(),
            filename: filename.to_string(),
        }
    }
}

/// The five BTR60 test chips left out of the published test set.
pub fn default_exclusions() -> Vec<Exclusion> {
    ["HB03353.003", "HB04933.003", "HB04999.003", "HB05000.003", "HB05631.003"]
        .iter()
        .map(|f| Exclusion::new("BTR60", f))
        .collect()
}

/// Reads `class,filename` lines; a header line starting with `class` is skipped.
pub fn parse_exclusions(text: &str) -> Result<Vec<Exclusion>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.to_ascii_lowercase().starts_with("class,")) {
            continue;
        }
        let mut cols = line.split(',');
        match (cols.next(), cols.next()) {
            (Some(c), Some(f)) => out.push(Exclusion::new(c.trim(), f.trim())),
            _ => return Err(SaversError::Data(format!("exclusion line {}: expected class,filename", i + 1))),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExclusionOutcome {
    pub manifest: DatasetManifest,
    pub removed: usize,
    /// Exclusions that matched no test entry.
    pub unmatched: Vec<Exclusion>,
}

fn normalise_class(name: &str) -> String {
    name.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_uppercase()
}

pub fn apply_exclusions(manifest: &DatasetManifest, exclusions: &[Exclusion]) -> ExclusionOutcome {
    let class_of = |name: &str| {
        manifest
            .class_names
            .iter()
            .position(|c| normalise_class(c) == normalise_class(name))
    };
    let resolved: Vec<(Option<usize>, &Exclusion)> = exclusions.iter().map(|x| (class_of(&x.class_name), x)).collect();
    let mut hit = vec![false; exclusions.len()];
    let mut entries = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let name = e.file_name();
        let matched = resolved.iter().position(|(class, x)| {
            e.split == Split::Test && *class == Some(e.class_id) && name.eq_ignore_ascii_case(&x.filename)
        });
        match matched {
            Some(i) => hit[i] = true,
            None => entries.push(e.clone()),
        }
    }
    let removed = manifest.entries.len() - entries.len();
    ExclusionOutcome {
        manifest: DatasetManifest {
            entries,
            class_names: manifest.class_names.clone(),
        },
        removed,
        unmatched: exclusions
            .iter()
            .zip(&hit)
            .filter(|(_, &h)| !h)
            .map(|(x, _)| x.clone())
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// `17_DEG/<CLASS>/...` for training and `15_DEG/<CLASS>/...` for
    /// testing; clutter lives under a `CLUTTER` or `BACKGROUND` class dir.
    Mstar,
    /// `train|test/cNN/*.pgm` with `*.label.pgm` siblings and a
    /// `classes.txt` at the root.
    Synthetic,
}

impl FromStr for Layout {
    type Err = SaversError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mstar" => Ok(Layout::Mstar),
            "synthetic" => Ok(Layout::Synthetic),
            other => Err(SaversError::Config(format!("unknown layout {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestBuild {
    pub manifest: DatasetManifest,
    pub warnings: Vec<String>,
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut items: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| SaversError::io(dir, e))?
        .map(|r| r.map(|d| d.path()).map_err(|e| SaversError::io(dir, e)))
        .collect::<Result<_>>()?;
    items.sort();
    for p in items {
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn is_label_file(p: &Path) -> bool {
    p.to_string_lossy().ends_with(".label.pgm")
}

fn is_chip_file(p: &Path) -> bool {
    let name = p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    if name.starts_with('.') || is_label_file(p) {
        return false;
    }
    let ext = p.extension().map(|e| e.to_string_lossy().to_ascii_lowercase()).unwrap_or_default();
    !matches!(ext.as_str(), "txt" | "csv" | "json" | "jpg" | "jpeg" | "png" | "html" | "md" | "ppm")
}

fn label_sibling(p: &Path) -> PathBuf {
    let s = p.to_string_lossy();
    let stem = s.strip_suffix(".pgm").unwrap_or(&s);
    PathBuf::from(format!("{stem}.label.pgm"))
}

fn relative(root: &Path, p: &Path) -> PathBuf {
    p.strip_prefix(root).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf())
}

/// Scans `root`; entries are ordered by path. For the MSTAR layout the
/// default exclusions are applied to the test split.
pub fn build_manifest(root: &Path, layout: Layout) -> Result<ManifestBuild> {
    match layout {
        Layout::Mstar => build_mstar(root),
        Layout::Synthetic => build_synthetic(root),
    }
}

fn build_mstar(root: &Path) -> Result<ManifestBuild> {
    let class_names: Vec<String> = MSTAR_CLASSES.iter().map(|s| s.to_string()).collect();
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for (dir, split) in [("17_DEG", Split::Train), ("15_DEG", Split::Test)] {
        let split_dir = root.join(dir);
        if !split_dir.is_dir() {
            return Err(SaversError::Data(format!("missing directory {}", split_dir.display())));
        }
        let mut files = Vec::new();
        walk(&split_dir, &mut files)?;
        let mut seen = vec![0usize; class_names.len()];
        for f in files.into_iter().filter(|f| is_chip_file(f)) {
            let rel = relative(&split_dir, &f);
            let class_dir = rel.components().next().map(|c| c.as_os_str().to_string_lossy().into_owned());
            let class_dir = class_dir.unwrap_or_default();
            let key = normalise_class(&class_dir);
            let class_id = if key == "CLUTTER" || key == "BACKGROUND" {
                Some(0)
            } else {
                class_names.iter().position(|c| normalise_class(c) == key)
            };
            let Some(class_id) = class_id else {
                warnings.push(format!("{}: unknown class directory {class_dir:?}, skipped", f.display()));
                continue;
            };
            seen[class_id] += 1;
            let label = label_sibling(&f);
            entries.push(ManifestEntry {
                path: relative(root, &f),
                label_path: label.exists().then(|| relative(root, &label)),
                class_id,
                split,
            });
        }
        for (c, &n) in seen.iter().enumerate() {
            if n == 0 {
                warnings.push(format!("class {} has no {split} chips", class_names[c]));
            }
        }
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let outcome = apply_exclusions(&DatasetManifest { entries, class_names }, &default_exclusions());
    for x in &outcome.unmatched {
        warnings.push(format!("exclusion {}/{} matched no test chip", x.class_name, x.filename));
    }
    Ok(ManifestBuild {
        manifest: outcome.manifest,
        warnings,
    })
}

fn build_synthetic(root: &Path) -> Result<ManifestBuild> {
    let classes_path = root.join("classes.txt");
    let mut class_names: Vec<String> = match std::fs::read_to_string(&classes_path) {
        Ok(text) => text.lines().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect(),
        Err(_) => Vec::new(),
    };
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    let mut max_class = 0;
    for split in [Split::Train, Split::Test] {
        let split_dir = root.join(split.to_string());
        if !split_dir.is_dir() {
            return Err(SaversError::Data(format!("missing directory {}", split_dir.display())));
        }
        let mut files = Vec::new();
        walk(&split_dir, &mut files)?;
        for f in files.into_iter().filter(|f| !is_label_file(f) && f.extension().is_some_and(|e| e == "pgm")) {
            let rel = relative(&split_dir, &f);
            let class_dir = rel
                .components()
                .next()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .unwrap_or_default();
            let class_id = class_dir
                .strip_prefix('c')
                .and_then(|n| n.parse::<usize>().ok())
                .ok_or_else(|| SaversError::Data(format!("{}: class directory {class_dir:?} is not cNN", f.display())))?;
            let label = label_sibling(&f);
            if !label.exists() {
                return Err(SaversError::Data(format!("{}: missing label image {}", f.display(), label.display())));
            }
            max_class = max_class.max(class_id);
            entries.push(ManifestEntry {
                path: relative(root, &f),
                label_path: Some(relative(root, &label)),
                class_id,
                split,
            });
        }
    }
    if class_names.is_empty() {
        class_names = std::iter::once("Background".to_string())
            .chain((1..=max_class).map(|k| format!("Target{k}")))
            .collect();
    }
    if max_class >= class_names.len() {
        return Err(SaversError::Data(format!(
            "class {max_class} found but {} lists only {} classes",
            classes_path.display(),
            class_names.len()
        )));
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = DatasetManifest { entries, class_names };
    for split in [Split::Train, Split::Test] {
        for (c, &n) in manifest.counts(split).iter().enumerate() {
            if n == 0 {
                warnings.push(format!("class {} has no {split} chips", manifest.class_names[c]));
            }
        }
    }
    Ok(ManifestBuild { manifest, warnings })
}

/// Reads one chip: PGM by extension, otherwise the header-chip format.
pub fn load_chip_file(path: &Path, class_id: usize) -> Result<super::chip::ChipRecord> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
        let image = read_pgm(path)?.to_image()?;
        Ok(super::chip::ChipRecord {
            image,
            class_id,
            depression_deg: 0.0,
            aspect_deg: 0.0,
            source_name: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        })
    } else {
        let bytes = std::fs::read(path).map_err(|e| SaversError::io(path, e))?;
        parse_header_chip(&bytes, class_id).map_err(|e| match e {
            SaversError::Format { offset, message } => {
                SaversError::format(offset, format!("{}: {message}", path.display()))
            }
            other => other,
        })
    }
}

/// Loads chip and label images for one split, in manifest order. Entries
/// without a label file get one from `policy`.
pub fn load_split(
    manifest: &DatasetManifest,
    root: &Path,
    split: Split,
    policy: &LabelPolicy,
) -> Result<Vec<LabeledChip>> {
    let n = manifest.num_classes();
    manifest
        .split(split)
        .map(|e| {
            let path = root.join(&e.path);
            let chip = load_chip_file(&path, e.class_id)?;
            let label = match &e.label_path {
                Some(lp) => {
                    let lp = root.join(lp);
                    let labels = read_pgm(&lp)?.to_labels()?;
                    if let Some(&bad) = labels.data().iter().find(|&&v| v != 0 && v != e.class_id) {
                        return Err(SaversError::Data(format!(
                            "{}: label {bad} differs from declared class {}",
                            lp.display(),
                            e.class_id
                        )));
                    }
                    LabelImage::new(labels, n)?
                }
                None => make_label_image(&chip, policy, n)
                    .map_err(|err| SaversError::Data(format!("{}: {err}", path.display())))?,
            };
            LabeledChip::new(chip, label).map_err(|err| SaversError::Data(format!("{}: {err}", path.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(class_id: usize, name: &str, split: Split) -> ManifestEntry {
        ManifestEntry {
            path: PathBuf::from(format!("{split}/{class_id}/{name}")),
            label_path: None,
            class_id,
            split,
        }
    }

    fn mstar_names() -> Vec<String> {
        MSTAR_CLASSES.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn published_totals() {
        let train: usize = MSTAR_COUNTS.iter().map(|c| c.0).sum();
        let test: usize = MSTAR_COUNTS.iter().map(|c| c.1).sum();
        assert_eq!((train, test), (3021, 2662));
    }

    #[test]
    fn btr60_exclusions() {
        let mut entries: Vec<ManifestEntry> =
            (0..190).map(|i| entry(4, &format!("HB1{i:04}.003"), Split::Test)).collect();
        for x in default_exclusions() {
            entries.push(entry(4, &x.filename, Split::Test));
        }
        entries.push(entry(4, "HB03353.003", Split::Train));
        let m = DatasetManifest {
            entries,
            class_names: mstar_names(),
        };
        let once = apply_exclusions(&m, &default_exclusions());
        assert_eq!(once.removed, 5);
        assert!(once.unmatched.is_empty());
        assert_eq!(once.manifest.counts(Split::Test)[4], 190);
        assert_eq!(once.manifest.counts(Split::Train)[4], 1);
        let twice = apply_exclusions(&once.manifest, &default_exclusions());
        assert_eq!(twice.manifest, once.manifest);
        assert_eq!(twice.unmatched.len(), 5);
        assert_eq!(apply_exclusions(&m, &[]).manifest, m);
    }

    #[test]
    fn csv_round_trip() {
        let mut m = DatasetManifest {
            entries: vec![entry(1, "a.pgm", Split::Train), entry(0, "b.pgm", Split::Test)],
            class_names: mstar_names(),
        };
        m.entries[0].label_path = Some("train/1/a.label.pgm".into());
        let csv = m.to_csv().unwrap();
        assert!(csv.starts_with("path,label_path,class_id,split\n"));
        assert_eq!(DatasetManifest::from_csv(&csv, mstar_names()).unwrap(), m);
        assert!(DatasetManifest::from_csv("nope\n", mstar_names()).is_err());
    }

    #[test]
    fn exclusion_file() {
        let x = parse_exclusions("class,filename\nBTR60,HB03353.003\n\n").unwrap();
        assert_eq!(x, vec![Exclusion::new("BTR60", "HB03353.003")]);
    }
}
