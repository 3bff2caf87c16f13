//! Python bindings: synthetic chips, model inference, metrics and the CLI.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use savers_core::data::{synth_chip as core_synth_chip, ClassTemplate};
use savers_core::metrics::{class_metrics as core_class_metrics, overall_accuracy as core_overall_accuracy, ConfusionMatrix};
use savers_core::net::{detect_targets, load_checkpoint, save_checkpoint, SaversConfig, SaversModel};
use savers_core::regions::LabelMap;
use savers_core::{SaversError, Tensor};

fn py_err(e: SaversError) -> PyErr {
    match e {
        SaversError::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

type Rows<T> = Vec<Vec<T>>;
type MetricTriple = (Option<f64>, Option<f64>, Option<f64>);

fn rows_of<T: Copy>(data: &[T], width: usize) -> Vec<Vec<T>> {
    data.chunks(width).map(<[T]>::to_vec).collect()
}

fn image_from_rows(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if h == 0 || w == 0 || rows.iter().any(|r| r.len() != w) {
        return Err(PyValueError::new_err("image must be a non-empty rectangular list of rows"));
    }
    Tensor::new(vec![1, h, w], rows.concat()).map_err(py_err)
}

fn labels_to_rows(map: &LabelMap) -> Vec<Vec<usize>> {
    rows_of(map.data(), map.shape().1)
}

/// Synthetic `size x size` chip of `class_id` (0 is clutter).
/// Returns `(image, labels)` as lists of rows.
#[pyfunction]
#[pyo3(signature = (class_id, size=64, num_classes=5, seed=0))]
fn synth_chip(class_id: usize, size: usize, num_classes: usize, seed: u64) -> PyResult<(Rows<f64>, Rows<usize>)> {
    let (chip, label) = core_synth_chip(&ClassTemplate::for_class(class_id), size, num_classes, seed).map_err(py_err)?;
    Ok((rows_of(chip.image.data(), size), labels_to_rows(&label.labels)))
}

#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: SaversModel,
}

#[pymethods]
impl PyModel {
    /// Freshly initialised model with default widths.
    #[new]
    #[pyo3(signature = (num_classes, seed=0))]
    fn new(num_classes: usize, seed: u64) -> PyResult<Self> {
        let config = SaversConfig::default().with_classes(num_classes);
        Ok(PyModel {
            inner: SaversModel::build(config, seed).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: load_checkpoint(path.as_ref()).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_checkpoint(&self.inner, path.as_ref()).map_err(py_err)
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    /// `(predicted class, background probability)` from the pooled grid.
    fn classify(&self, image: Vec<Vec<f64>>) -> PyResult<(usize, f64)> {
        let coarse = self.inner.coarse_segment(&image_from_rows(image)?).map_err(py_err)?;
        Ok((coarse.predicted_class, coarse.background_prob()))
    }

    /// Coarse class, per-pixel labels and detected targets for one image.
    #[pyo3(signature = (image, min_pixels=8))]
    fn segment<'py>(&self, py: Python<'py>, image: Vec<Vec<f64>>, min_pixels: usize) -> PyResult<Bound<'py, PyDict>> {
        let (coarse, fine) = self.inner.segment(&image_from_rows(image)?).map_err(py_err)?;
        let targets: Vec<(usize, (f64, f64), usize)> = detect_targets(&fine.label_map, min_pixels)
            .into_iter()
            .map(|t| (t.class_id, t.centroid, t.pixel_count))
            .collect();
        let out = PyDict::new(py);
        out.set_item("coarse_class", coarse.predicted_class)?;
        out.set_item("background_prob", coarse.background_prob())?;
        out.set_item("cells", labels_to_rows(&coarse.cell_predictions()))?;
        out.set_item("labels", labels_to_rows(&fine.label_map))?;
        out.set_item("targets", targets)?;
        Ok(out)
    }
}

fn confusion(counts: Vec<Vec<u64>>, names: Option<Vec<String>>) -> PyResult<ConfusionMatrix> {
    let names = names.unwrap_or_else(|| (0..counts.len()).map(|i| i.to_string()).collect());
    ConfusionMatrix::from_counts(counts, names).map_err(py_err)
}

/// Per-class `(precision, recall, f1)` of a confusion matrix whose rows are
/// predicted and columns actual classes. Undefined values are `None`.
#[pyfunction]
#[pyo3(signature = (counts, names=None))]
fn class_metrics(counts: Vec<Vec<u64>>, names: Option<Vec<String>>) -> PyResult<Vec<MetricTriple>> {
    let cm = confusion(counts, names)?;
    Ok((0..cm.num_classes())
        .map(|c| {
            let m = core_class_metrics(&cm, c);
            (m.precision, m.recall, m.f1)
        })
        .collect())
}

#[pyfunction]
fn overall_accuracy(counts: Vec<Vec<u64>>) -> PyResult<f64> {
    core_overall_accuracy(&confusion(counts, None)?).map_err(py_err)
}

/// Runs the command-line tool with `args` (without the program name) and
/// returns its log.
#[pyfunction]
fn run(args: Vec<String>) -> PyResult<String> {
    let mut log = Vec::new();
    let full = std::iter::once("savers".to_string()).chain(args);
    savers_core::cli::run_with(full, &mut log).map_err(py_err)?;
    Ok(String::from_utf8_lossy(&log).into_owned())
}

#[pymodule]
fn savers(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(synth_chip, m)?)?;
    m.add_function(wrap_pyfunction!(class_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(overall_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
