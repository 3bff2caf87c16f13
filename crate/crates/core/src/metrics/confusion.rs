use crate::error::{Result, SaversError};

/// Square count matrix indexed `[predicted][actual]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Self {
        let n = class_names.len();
        ConfusionMatrix {
            counts: vec![vec![0; n]; n],
            class_names,
        }
    }

    /// `counts[predicted][actual]`; must be square and match `class_names`.
    pub fn from_counts(counts: Vec<Vec<u64>>, class_names: Vec<String>) -> Result<Self> {
        let n = class_names.len();
        if counts.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(SaversError::Dimension(format!("confusion matrix must be {n}x{n}")));
        }
        Ok(ConfusionMatrix { counts, class_names })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn get(&self, predicted: usize, actual: usize) -> u64 {
        self.counts[predicted][actual]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn add(&mut self, predicted: usize, actual: usize) -> Result<()> {
        let n = self.num_classes();
        if predicted >= n || actual >= n {
            return Err(SaversError::Data(format!(
                "class pair (predicted {predicted}, actual {actual}) outside 0..{n}"
            )));
        }
        self.counts[predicted][actual] += 1;
        Ok(())
    }

    /// Element-wise sum; both must share class names.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.class_names != self.class_names {
            return Err(SaversError::Dimension("cannot merge confusion matrices over different classes".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Chips predicted as each class.
    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Chips actually of each class.
    pub fn column_sums(&self) -> Vec<u64> {
        (0..self.num_classes()).map(|c| self.counts.iter().map(|r| r[c]).sum()).collect()
    }
}

pub fn accumulate(predictions: &[usize], truths: &[usize], class_names: Vec<String>) -> Result<ConfusionMatrix> {
    if predictions.len() != truths.len() {
        return Err(SaversError::Data(format!(
            "{} predictions but {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(class_names);
    for (&p, &t) in predictions.iter().zip(truths) {
        cm.add(p, t)?;
    }
    Ok(cm)
}

/// One-vs-rest counts and rates for a class. Rates are `None` where their
/// denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub class_id: usize,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn class_metrics(cm: &ConfusionMatrix, class_id: usize) -> ClassMetrics {
    let tp = cm.get(class_id, class_id);
    let fp = cm.counts[class_id].iter().sum::<u64>() - tp;
    let fn_ = cm.counts.iter().map(|r| r[class_id]).sum::<u64>() - tp;
    let tn = cm.total() - tp - fp - fn_;
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    ClassMetrics {
        class_id,
        tp,
        fp,
        fn_,
        tn,
        precision,
        recall,
        f1,
    }
}

pub fn all_class_metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.num_classes()).map(|c| class_metrics(cm, c)).collect()
}

pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(SaversError::Data("accuracy of an empty confusion matrix".into())),
        total => Ok(cm.trace() as f64 / total as f64),
    }
}
