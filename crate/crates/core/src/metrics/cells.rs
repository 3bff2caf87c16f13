use crate::error::{Result, SaversError};
use crate::regions::LabelMap;

/// Fraction of chips whose per-cell prediction equals the chip class.
#[derive(Debug, Clone, PartialEq)]
pub struct CellAccuracyMap {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub accuracy: Vec<f64>,
    pub chips: usize,
}

impl CellAccuracyMap {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.accuracy[r * self.cols + c]
    }
}

pub fn cell_accuracy_map(cell_predictions: &[LabelMap], truths: &[usize]) -> Result<CellAccuracyMap> {
    if cell_predictions.len() != truths.len() {
        return Err(SaversError::Data(format!(
            "{} cell maps but {} truths",
            cell_predictions.len(),
            truths.len()
        )));
    }
    let Some(first) = cell_predictions.first() else {
        return Err(SaversError::Data("cell accuracy of an empty evaluation set".into()));
    };
    let (rows, cols) = first.shape();
    let mut hits = vec![0usize; rows * cols];
    for (i, (map, &t)) in cell_predictions.iter().zip(truths).enumerate() {
        if map.shape() != (rows, cols) {
            return Err(SaversError::Dimension(format!(
                "cell map {i} is {:?}, expected {:?}",
                map.shape(),
                (rows, cols)
            )));
        }
        for (h, &p) in hits.iter_mut().zip(map.data()) {
            *h += (p == t) as usize;
        }
    }
    let n = truths.len() as f64;
    Ok(CellAccuracyMap {
        rows,
        cols,
        accuracy: hits.iter().map(|&h| h as f64 / n).collect(),
        chips: truths.len(),
    })
}
