//! The `savers` command line: synth, manifest, train, eval, infer, compose
//! and report.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::pgm::{encode_ppm, read_pgm, write_file, write_image_pgm, write_labels_pgm};
use crate::data::{
    apply_exclusions, build_manifest, load_chip_file, load_split, parse_exclusions, write_manifest,
    write_synthetic_dataset, DatasetManifest, LabelPolicy, LabeledChip, Layout, SceneFile, Split, SynthDatasetConfig,
};
use crate::error::{Result, SaversError};
use crate::metrics::{
    predictions_from_csv, predictions_to_csv, render_reports, summarize, EvalReport, PredictionRecord, DEFAULT_BINS,
};
use crate::net::{composite_output, detect_targets, load_checkpoint, save_checkpoint, DetectedTarget, SaversConfig, SaversModel};
use crate::tensor::Tensor;
use crate::train::{coarse_accuracy, fit_with, TrainConfig};

pub const TARGETS_HEADER: &str = "class,centroid_row,centroid_col,pixel_count";

/// Settings shared by all commands, read from `--config`. Every field is
/// optional; flags override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// `num_classes` is taken from the dataset when training.
    pub model: SaversConfig,
    pub train: TrainConfig,
    pub synth: SynthDatasetConfig,
    pub label_policy: LabelPolicy,
    /// `class,filename` CSV applied to the test split on top of the
    /// built-in list.
    pub exclusions: Option<PathBuf>,
    /// Every n-th training chip of each class is held out to pick the best
    /// epoch; 0 selects on the training set itself.
    pub validation_every: usize,
    pub bins: usize,
    pub min_pixels: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            model: SaversConfig::default(),
            train: TrainConfig::default(),
            synth: SynthDatasetConfig::default(),
            label_policy: LabelPolicy::default(),
            exclusions: None,
            validation_every: 5,
            bins: DEFAULT_BINS,
            min_pixels: crate::net::DEFAULT_MIN_PIXELS,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SaversError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| SaversError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Parser)]
#[command(name = "savers", version, about = "Single-stage SAR target recognition")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Write into a non-empty output directory.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with exact label images.
    Synth(SynthArgs),
    /// Build a manifest over a chip directory tree.
    Manifest(ManifestArgs),
    /// Train a model and keep the best checkpoint.
    Train(TrainArgs),
    /// Classify a split and write metric reports.
    Eval(EvalArgs),
    /// Segment one image and list the detected targets.
    Infer(InferArgs),
    /// Compose a multi-target scene from a JSON description.
    Compose(ComposeArgs),
    /// Rebuild reports from a predictions CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of target classes.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Number of clutter chips (defaults to --per-class).
    #[arg(long)]
    pub clutter: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ManifestArgs {
    #[arg(long)]
    pub root: PathBuf,
    /// `mstar` or `synthetic`.
    #[arg(long, default_value = "mstar")]
    pub layout: String,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Manifest CSV, or a directory containing `manifest.csv`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Manifest CSV, or a directory containing `manifest.csv`.
    #[arg(long)]
    pub data: PathBuf,
    /// `test` or `train`.
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// PGM image or header-format chip.
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub min_pixels: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    /// JSON scene description.
    #[arg(long)]
    pub scene: PathBuf,
    /// Number of target classes (labels may use 0..=classes).
    #[arg(long)]
    pub classes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    /// One class name per line; defaults to `classes.txt` next to the predictions.
    #[arg(long)]
    pub class_names: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command,
/// writing progress to `log`.
pub fn run_with<I, T>(args: I, log: &mut dyn std::io::Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| SaversError::Config(e.to_string()))?;
    execute(&cli, log)
}

pub fn execute(cli: &Cli, log: &mut dyn std::io::Write) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::Synth(a) => cmd_synth(cli, cfg, a, log),
        Command::Manifest(a) => cmd_manifest(cli, cfg, a, log),
        Command::Train(a) => cmd_train(cli, cfg, a, log),
        Command::Eval(a) => cmd_eval(cli, cfg, a, log),
        Command::Infer(a) => cmd_infer(cli, cfg, a, log),
        Command::Compose(a) => cmd_compose(cli, cfg, a, log),
        Command::Report(a) => cmd_report(cli, cfg, a, log),
    }
}

fn say(log: &mut dyn std::io::Write, msg: impl AsRef<str>) {
    let _ = writeln!(log, "{}", msg.as_ref());
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(SaversError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ))
    }
}

/// Refuses a non-empty directory unless forced, then creates it.
fn prepare_out(out: &Path, force: bool) -> Result<()> {
    if out.exists() {
        if !out.is_dir() {
            return Err(SaversError::Config(format!("{} exists and is not a directory", out.display())));
        }
        let non_empty = std::fs::read_dir(out).map_err(|e| SaversError::io(out, e))?.next().is_some();
        if non_empty && !force {
            return Err(SaversError::Config(format!(
                "output directory {} is not empty; pass --force to write into it",
                out.display()
            )));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| SaversError::io(out, e))
}

fn manifest_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join("manifest.csv")
    } else {
        data.to_path_buf()
    }
}

/// Manifest plus the directory its paths are relative to.
fn open_manifest(data: &Path) -> Result<(DatasetManifest, PathBuf)> {
    let path = manifest_path(data);
    require_file(&path)?;
    let manifest = DatasetManifest::read(&path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((manifest, root))
}

fn cmd_synth(cli: &Cli, cfg: RunConfig, a: &SynthArgs, log: &mut dyn std::io::Write) -> Result<()> {
    let mut synth = cfg.synth;
    if let Some(v) = a.classes {
        synth.classes = v;
    }
    if let Some(v) = a.per_class {
        synth.per_class = v;
    }
    if a.clutter.is_some() {
        synth.clutter = a.clutter;
    }
    if let Some(v) = a.size {
        synth.size = v;
    }
    synth.validate()?;
    prepare_out(&cli.out, cli.force)?;
    let manifest = write_synthetic_dataset(&cli.out, &synth, cfg.seed)?;
    say(
        log,
        format!(
            "wrote {} chips ({} train, {} test) to {}",
            manifest.entries.len(),
            manifest.split(Split::Train).count(),
            manifest.split(Split::Test).count(),
            cli.out.display()
        ),
    );
    Ok(())
}

fn exclusion_list(cfg: &RunConfig) -> Result<Vec<crate::data::Exclusion>> {
    match &cfg.exclusions {
        Some(p) => {
            require_file(p)?;
            parse_exclusions(&std::fs::read_to_string(p).map_err(|e| SaversError::io(p, e))?)
        }
        None => Ok(Vec::new()),
    }
}

fn cmd_manifest(cli: &Cli, cfg: RunConfig, a: &ManifestArgs, log: &mut dyn std::io::Write) -> Result<()> {
    let layout: Layout = a.layout.parse()?;
    let extra = exclusion_list(&cfg)?;
    let build = build_manifest(&a.root, layout)?;
    for w in &build.warnings {
        say(log, format!("warning: {w}"));
    }
    let outcome = apply_exclusions(&build.manifest, &extra);
    for x in &outcome.unmatched {
        say(log, format!("warning: exclusion {}/{} matched no test chip", x.class_name, x.filename));
    }
    let mut manifest = outcome.manifest;
    prepare_out(&cli.out, cli.force)?;
    let root = std::fs::canonicalize(&a.root).map_err(|e| SaversError::io(&a.root, e))?;
    let out = std::fs::canonicalize(&cli.out).map_err(|e| SaversError::io(&cli.out, e))?;
    if root != out {
        for e in &mut manifest.entries {
            e.path = root.join(&e.path);
            e.label_path = e.label_path.as_ref().map(|p| root.join(p));
        }
    }
    let classes = cli.out.join("classes.txt");
    std::fs::write(&classes, manifest.classes_txt()).map_err(|e| SaversError::io(&classes, e))?;
    write_manifest(&manifest, &cli.out.join("manifest.csv"))?;
    for split in [Split::Train, Split::Test] {
        let counts = manifest.counts(split);
        let parts: Vec<String> = manifest.class_names.iter().zip(&counts).map(|(n, c)| format!("{n}={c}")).collect();
        say(log, format!("{split}: {} chips ({})", counts.iter().sum::<usize>(), parts.join(", ")));
    }
    Ok(())
}

fn load(manifest: &DatasetManifest, root: &Path, split: Split, cfg: &RunConfig) -> Result<Vec<LabeledChip>> {
    load_split(manifest, root, split, &cfg.label_policy)
}

/// Splits training chips into (fit, validation) by per-class index. Too few
/// chips to hold any out means selecting on the training set.
fn holdout(chips: Vec<LabeledChip>, every: usize) -> (Vec<LabeledChip>, Vec<LabeledChip>) {
    if every == 0 {
        return (chips.clone(), chips);
    }
    let mut seen = std::collections::HashMap::new();
    let (mut fit, mut val) = (Vec::new(), Vec::new());
    for c in chips {
        let k = seen.entry(c.chip.class_id).or_insert(0usize);
        if *k % every == every - 1 {
            val.push(c);
        } else {
            fit.push(c);
        }
        *k += 1;
    }
    if val.is_empty() {
        return (fit.clone(), fit);
    }
    (fit, val)
}

fn cmd_train(cli: &Cli, cfg: RunConfig, a: &TrainArgs, log: &mut dyn std::io::Write) -> Result<()> {
    let mut tc = cfg.train.clone();
    tc.seed = cfg.seed;
    if let Some(v) = a.epochs {
        tc.epochs = v;
    }
    if let Some(v) = a.lr {
        tc.learning_rate = v;
    }
    if let Some(v) = a.momentum {
        tc.momentum = v;
    }
    if let Some(v) = a.batch_size {
        tc.batch_size = v;
    }
    tc.validate()?;
    let (manifest, root) = open_manifest(&a.data)?;
    let model_cfg = cfg.model.clone().with_classes(manifest.num_classes());
    model_cfg.validate()?;
    prepare_out(&cli.out, cli.force)?;

    let train = load(&manifest, &root, Split::Train, &cfg)?;
    if train.is_empty() {
        return Err(SaversError::Data("manifest has no training chips".into()));
    }
    let (fit_set, val_set) = holdout(train, cfg.validation_every);
    say(
        log,
        format!(
            "training on {} chips, selecting the epoch on {} chips, {} epochs",
            fit_set.len(),
            val_set.len(),
            tc.epochs
        ),
    );
    let model = SaversModel::build(model_cfg, cfg.seed)?;
    let start = std::time::Instant::now();
    let outcome = fit_with(model, &fit_set, &val_set, &tc, |r, _| {
        say(
            log,
            format!(
                "epoch {:>3}  loss {:.5}  validation accuracy {:.4}  ({:.0} s)",
                r.epoch,
                r.mean_train_loss,
                r.eval_accuracy,
                start.elapsed().as_secs_f64()
            ),
        );
        Ok(())
    })?;
    let history = cli.out.join("history.csv");
    write_file(&history, outcome.history.to_csv().as_bytes())?;
    save_checkpoint(&outcome.best_model, &cli.out.join("checkpoint.bin"))?;
    let best = &outcome.history.records[outcome.best_epoch - 1];
    say(
        log,
        format!("best epoch {} validation accuracy {:.4}", outcome.best_epoch, best.eval_accuracy),
    );
    let test = load(&manifest, &root, Split::Test, &cfg)?;
    if !test.is_empty() {
        let acc = coarse_accuracy(&outcome.best_model, &test)?;
        say(log, format!("test accuracy {acc:.4}"));
    }
    Ok(())
}

fn class_names_file(out: &Path, names: &[String]) -> Result<()> {
    let path = out.join("classes.txt");
    let text: String = names.iter().map(|n| format!("{n}\n")).collect();
    write_file(&path, text.as_bytes())
}

fn print_report(report: &EvalReport, log: &mut dyn std::io::Write) {
    say(
        log,
        format!(
            "accuracy {:.4} ({}/{})",
            report.accuracy,
            report.confusion.trace(),
            report.confusion.total()
        ),
    );
    let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.3}"));
    for m in &report.metrics {
        say(
            log,
            format!(
                "{:<12} precision {}  recall {}  f1 {}",
                report.confusion.class_names[m.class_id],
                fmt(m.precision),
                fmt(m.recall),
                fmt(m.f1)
            ),
        );
    }
}

fn cmd_eval(cli: &Cli, cfg: RunConfig, a: &EvalArgs, log: &mut dyn std::io::Write) -> Result<()> {
    let split: Split = a.split.parse()?;
    require_file(&a.checkpoint)?;
    let (manifest, root) = open_manifest(&a.data)?;
    let model = load_checkpoint(&a.checkpoint)?;
    if model.num_classes() != manifest.num_classes() {
        return Err(SaversError::Config(format!(
            "checkpoint has {} classes but the manifest lists {}",
            model.num_classes(),
            manifest.num_classes()
        )));
    }
    let entries: Vec<_> = manifest.split(split).cloned().collect();
    let chips = load(&manifest, &root, split, &cfg)?;
    if chips.is_empty() {
        return Err(SaversError::Data(format!("no {split} chips in the manifest")));
    }
    let records = entries
        .iter()
        .zip(&chips)
        .map(|(e, c)| {
            let coarse = model.coarse_segment(&c.chip.image)?;
            Ok(PredictionRecord::new(&e.path.to_string_lossy(), c.chip.class_id, &coarse))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = summarize(&records, manifest.class_names.clone(), cfg.bins)?;
    prepare_out(&cli.out, cli.force)?;
    render_reports(&report, &cli.out)?;
    write_file(&cli.out.join("predictions.csv"), predictions_to_csv(&records)?.as_bytes())?;
    class_names_file(&cli.out, &manifest.class_names)?;
    print_report(&report, log);
    Ok(())
}

fn read_image(path: &Path) -> Result<Tensor> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
        read_pgm(path)?.to_image()
    } else {
        Ok(load_chip_file(path, 0)?.image)
    }
}

pub fn targets_csv(targets: &[DetectedTarget]) -> String {
    let mut out = format!("{TARGETS_HEADER}\n");
    for t in targets {
        out.push_str(&format!(
            "{},{:.3},{:.3},{}\n",
            t.class_id, t.centroid.0, t.centroid.1, t.pixel_count
        ));
    }
    out
}

/// `(class, centroid_row, centroid_col, pixel_count)` rows of a targets CSV.
pub fn parse_targets_csv(text: &str) -> Result<Vec<(usize, f64, f64, usize)>> {
    let bad = |l: &str| SaversError::Data(format!("bad targets row {l:?}"));
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            if c.len() != 4 {
                return Err(bad(l));
            }
            Ok((
                c[0].parse().map_err(|_| bad(l))?,
                c[1].parse().map_err(|_| bad(l))?,
                c[2].parse().map_err(|_| bad(l))?,
                c[3].parse().map_err(|_| bad(l))?,
            ))
        })
        .collect()
}

fn cmd_infer(cli: &Cli, cfg: RunConfig, a: &InferArgs, log: &mut dyn std::io::Write) -> Result<()> {
    require_file(&a.checkpoint)?;
    require_file(&a.image)?;
    let model = load_checkpoint(&a.checkpoint)?;
    let image = read_image(&a.image)?;
    let (coarse, fine) = model.segment(&image)?;
    let targets = detect_targets(&fine.label_map, a.min_pixels.unwrap_or(cfg.min_pixels));
    let render = composite_output(&image, &fine, &coarse)?;
    prepare_out(&cli.out, cli.force)?;
    write_labels_pgm(&cli.out.join("labels.pgm"), &fine.label_map)?;
    write_file(&cli.out.join("composite.ppm"), &encode_ppm(&render.composite))?;
    write_file(&cli.out.join("coarse.ppm"), &encode_ppm(&render.coarse))?;
    write_file(&cli.out.join("fine.ppm"), &encode_ppm(&render.fine))?;
    write_file(&cli.out.join("targets.csv"), targets_csv(&targets).as_bytes())?;
    say(
        log,
        format!(
            "coarse class {} (p0 {:.4}); {} target(s) detected",
            coarse.predicted_class,
            coarse.background_prob(),
            targets.len()
        ),
    );
    for t in &targets {
        say(
            log,
            format!(
                "  class {} at ({:.1}, {:.1}), {} px",
                t.class_id, t.centroid.0, t.centroid.1, t.pixel_count
            ),
        );
    }
    Ok(())
}

fn cmd_compose(cli: &Cli, cfg: RunConfig, a: &ComposeArgs, log: &mut dyn std::io::Write) -> Result<()> {
    require_file(&a.scene)?;
    let text = std::fs::read_to_string(&a.scene).map_err(|e| SaversError::io(&a.scene, e))?;
    let scene = SceneFile::from_json(&text).map_err(|e| SaversError::Config(format!("{}: {e}", a.scene.display())))?;
    let num_classes = a.classes.unwrap_or(cfg.synth.classes) + 1;
    let base = a.scene.parent().map(Path::to_path_buf).unwrap_or_default();
    let (image, labels) = scene.compose(&base, num_classes)?;
    prepare_out(&cli.out, cli.force)?;
    write_image_pgm(&cli.out.join("scene.pgm"), &image)?;
    write_labels_pgm(&cli.out.join("scene.label.pgm"), &labels.labels)?;
    let truth = detect_targets(&labels.labels, 1);
    write_file(&cli.out.join("truth.csv"), targets_csv(&truth).as_bytes())?;
    say(
        log,
        format!(
            "composed {}x{} scene with {} placement(s), {} ground-truth target(s)",
            scene.canvas_h,
            scene.canvas_w,
            scene.placements.len(),
            truth.len()
        ),
    );
    Ok(())
}

fn cmd_report(cli: &Cli, cfg: RunConfig, a: &ReportArgs, log: &mut dyn std::io::Write) -> Result<()> {
    require_file(&a.predictions)?;
    let names_path = a
        .class_names
        .clone()
        .unwrap_or_else(|| a.predictions.with_file_name("classes.txt"));
    require_file(&names_path)?;
    let names: Vec<String> = std::fs::read_to_string(&names_path)
        .map_err(|e| SaversError::io(&names_path, e))?
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    let text = std::fs::read_to_string(&a.predictions).map_err(|e| SaversError::io(&a.predictions, e))?;
    let records = predictions_from_csv(&text)?;
    let report = summarize(&records, names, cfg.bins)?;
    prepare_out(&cli.out, cli.force)?;
    render_reports(&report, &cli.out)?;
    print_report(&report, log);
    Ok(())
}
