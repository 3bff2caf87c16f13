//! Per-chip prediction records and CSV/PGM report files.

use std::path::{Path, PathBuf};

use super::cells::{cell_accuracy_map, CellAccuracyMap};
use super::confusion::{accumulate, all_class_metrics, overall_accuracy, ClassMetrics, ConfusionMatrix};
use super::distribution::ScoreDistribution;
use crate::data::pgm::{write_file, GrayImage, PGM_MAXVAL};
use crate::error::{Result, SaversError};
use crate::net::CoarseResult;
use crate::regions::LabelMap;

pub const PREDICTIONS_HEADER: &str = "name,true_class,predicted_class,background_prob,grid,cells";
const UNDEFINED: &str = "NA";

/// Coarse outcome for one evaluated chip.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub name: String,
    pub true_class: usize,
    pub predicted_class: usize,
    pub background_prob: f64,
    pub cells: LabelMap,
}

impl PredictionRecord {
    pub fn new(name: &str, true_class: usize, coarse: &CoarseResult) -> Self {
        PredictionRecord {
            name: name.to_string(),
            true_class,
            predicted_class: coarse.predicted_class,
            background_prob: coarse.background_prob(),
            cells: coarse.cell_predictions(),
        }
    }
}

pub fn predictions_to_csv(records: &[PredictionRecord]) -> Result<String> {
    let mut out = format!("{PREDICTIONS_HEADER}\n");
    for r in records {
        if r.name.contains(',') || r.name.contains('\n') {
            return Err(SaversError::Data(format!("chip name {:?} cannot be stored in CSV", r.name)));
        }
        let cells: Vec<String> = r.cells.data().iter().map(|c| c.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{},{}x{},{}\n",
            r.name,
            r.true_class,
            r.predicted_class,
            r.background_prob,
            r.cells.height(),
            r.cells.width(),
            cells.join(" ")
        ));
    }
    Ok(out)
}

pub fn predictions_from_csv(text: &str) -> Result<Vec<PredictionRecord>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(PREDICTIONS_HEADER) {
        return Err(SaversError::Data(format!("predictions header should be {PREDICTIONS_HEADER:?}")));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |what: &str| SaversError::Data(format!("predictions line {}: {what}", i + 2));
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(bad("expected 6 columns"));
        }
        let num = |s: &str, what: &str| s.trim().parse::<usize>().map_err(|_| bad(what));
        let (gh, gw) = cols[4].split_once('x').ok_or_else(|| bad("grid should be RxC"))?;
        let (gh, gw) = (num(gh, "grid rows")?, num(gw, "grid cols")?);
        let cells = cols[5]
            .split_whitespace()
            .map(|c| num(c, "cell class"))
            .collect::<Result<Vec<_>>>()?;
        if cells.len() != gh * gw {
            return Err(bad("cell count does not match grid"));
        }
        out.push(PredictionRecord {
            name: cols[0].to_string(),
            true_class: num(cols[1], "true_class")?,
            predicted_class: num(cols[2], "predicted_class")?,
            background_prob: cols[3].trim().parse().map_err(|_| bad("background_prob"))?,
            cells: LabelMap::new(gh, gw, cells)?,
        });
    }
    Ok(out)
}

/// Everything derived from one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub metrics: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub distribution: ScoreDistribution,
    /// `None` when the chips' coarse grids differ in shape.
    pub cells: Option<CellAccuracyMap>,
}

pub fn summarize(records: &[PredictionRecord], class_names: Vec<String>, bins: usize) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(SaversError::Data("empty evaluation set".into()));
    }
    let preds: Vec<usize> = records.iter().map(|r| r.predicted_class).collect();
    let truths: Vec<usize> = records.iter().map(|r| r.true_class).collect();
    let confusion = accumulate(&preds, &truths, class_names)?;
    let scores: Vec<f64> = records.iter().map(|r| 1.0 - r.background_prob).collect();
    let maps: Vec<LabelMap> = records.iter().map(|r| r.cells.clone()).collect();
    let cells = match cell_accuracy_map(&maps, &truths) {
        Ok(c) => Some(c),
        Err(SaversError::Dimension(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        metrics: all_class_metrics(&confusion),
        accuracy: overall_accuracy(&confusion)?,
        confusion,
        distribution: ScoreDistribution::from_values(&scores, &truths, bins),
        cells,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or(UNDEFINED.to_string(), |x| x.to_string())
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s == UNDEFINED {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| SaversError::Data(format!("bad metric value {s:?}")))
}

/// Rows are predicted classes, columns actual classes, with a precision
/// column and trailing recall and F1 rows.
pub fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let metrics = all_class_metrics(cm);
    let mut out = format!("predicted\\actual,{},precision\n", cm.class_names.join(","));
    for (p, row) in cm.counts().iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        out.push_str(&format!("{},{},{}\n", cm.class_names[p], cells.join(","), opt(metrics[p].precision)));
    }
    let recall: Vec<String> = metrics.iter().map(|m| opt(m.recall)).collect();
    let f1: Vec<String> = metrics.iter().map(|m| opt(m.f1)).collect();
    out.push_str(&format!("recall,{},\n", recall.join(",")));
    out.push_str(&format!("f1,{},\n", f1.join(",")));
    out
}

/// Reads the count block of [`confusion_csv`] output.
pub fn parse_confusion_csv(text: &str) -> Result<ConfusionMatrix> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| SaversError::Data("empty confusion CSV".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 {
        return Err(SaversError::Data("confusion CSV header too short".into()));
    }
    let names: Vec<String> = cols[1..cols.len() - 1].iter().map(|s| s.to_string()).collect();
    let n = names.len();
    let mut counts = Vec::with_capacity(n);
    for line in lines.take(n) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n + 2 {
            return Err(SaversError::Data(format!("confusion row {line:?} has {} columns", cells.len())));
        }
        counts.push(
            cells[1..=n]
                .iter()
                .map(|c| c.trim().parse::<u64>().map_err(|_| SaversError::Data(format!("bad count {c:?}"))))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    ConfusionMatrix::from_counts(counts, names)
}

pub fn metrics_csv(metrics: &[ClassMetrics], class_names: &[String]) -> String {
    let mut out = String::from("class,precision,recall,f1\n");
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{}\n",
            class_names[m.class_id],
            opt(m.precision),
            opt(m.recall),
            opt(m.f1)
        ));
    }
    out
}

/// `(class name, precision, recall, f1)` rows.
pub type MetricsRow = (String, Option<f64>, Option<f64>, Option<f64>);

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            if c.len() != 4 {
                return Err(SaversError::Data(format!("metrics row {l:?} should have 4 columns")));
            }
            Ok((c[0].to_string(), parse_opt(c[1])?, parse_opt(c[2])?, parse_opt(c[3])?))
        })
        .collect()
}

pub fn distribution_csv(d: &ScoreDistribution) -> String {
    let mut out = String::from("bin_low,bin_high,target_count,clutter_count,target_cdf\n");
    let (th, ch) = (d.target_histogram(), d.clutter_histogram());
    for i in 0..d.bins {
        let (lo, hi) = d.bin_edges(i);
        out.push_str(&format!("{lo},{hi},{},{},{}\n", th[i], ch[i], opt(d.target_cdf(hi))));
    }
    out
}

pub fn cell_accuracy_csv(map: &CellAccuracyMap) -> String {
    let mut out = String::from("row,col,accuracy\n");
    for r in 0..map.rows {
        for c in 0..map.cols {
            out.push_str(&format!("{r},{c},{}\n", map.get(r, c)));
        }
    }
    out
}

/// Heat image with `scale x scale` pixels per cell, white = accuracy 1.
pub fn cell_accuracy_pgm(map: &CellAccuracyMap, scale: usize) -> Vec<u8> {
    let (h, w) = (map.rows * scale, map.cols * scale);
    GrayImage {
        height: h,
        width: w,
        maxval: PGM_MAXVAL,
        samples: (0..h * w)
            .map(|i| (map.get(i / w / scale, i % w / scale) * PGM_MAXVAL as f64).round() as u16)
            .collect(),
    }
    .encode()
}

/// Writes the report files into `out_dir` and returns their paths. All
/// contents are rendered before the first file is written.
pub fn render_reports(report: &EvalReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if report.confusion.total() == 0 {
        return Err(SaversError::Data("empty evaluation set; no reports written".into()));
    }
    let mut files: Vec<(&str, Vec<u8>)> = vec![
        ("confusion.csv", confusion_csv(&report.confusion).into_bytes()),
        ("metrics.csv", metrics_csv(&report.metrics, &report.confusion.class_names).into_bytes()),
        ("distribution.csv", distribution_csv(&report.distribution).into_bytes()),
    ];
    if let Some(cells) = &report.cells {
        files.push(("cell_accuracy.csv", cell_accuracy_csv(cells).into_bytes()));
        files.push(("cell_accuracy.pgm", cell_accuracy_pgm(cells, 16)));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| SaversError::io(out_dir, e))?;
    files
        .into_iter()
        .map(|(name, bytes)| {
            let path = out_dir.join(name);
            write_file(&path, &bytes)?;
            Ok(path)
        })
        .collect()
}
