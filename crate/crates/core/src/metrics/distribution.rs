use crate::net::CoarseResult;

pub const DEFAULT_BINS: usize = 50;

/// Targetness scores `1 - p0`, split by whether the chip holds a target.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDistribution {
    pub bins: usize,
    /// Sorted ascending.
    pub target_values: Vec<f64>,
    /// Sorted ascending.
    pub clutter_values: Vec<f64>,
}

fn bin_of(v: f64, bins: usize) -> usize {
    ((v * bins as f64).floor() as usize).min(bins - 1)
}

impl ScoreDistribution {
    /// `values[i]` is the score of a chip whose true class is `truths[i]`.
    pub fn from_values(values: &[f64], truths: &[usize], bins: usize) -> Self {
        let bins = bins.max(1);
        let mut target_values = Vec::new();
        let mut clutter_values = Vec::new();
        for (&v, &t) in values.iter().zip(truths) {
            let v = v.clamp(0.0, 1.0);
            if t == 0 {
                clutter_values.push(v);
            } else {
                target_values.push(v);
            }
        }
        target_values.sort_by(f64::total_cmp);
        clutter_values.sort_by(f64::total_cmp);
        ScoreDistribution {
            bins,
            target_values,
            clutter_values,
        }
    }

    pub fn len(&self) -> usize {
        self.target_values.len() + self.clutter_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(lower, upper)` of bin `i`.
    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let w = 1.0 / self.bins as f64;
        (i as f64 * w, (i + 1) as f64 * w)
    }

    fn histogram(&self, values: &[f64]) -> Vec<usize> {
        let mut h = vec![0; self.bins];
        for &v in values {
            h[bin_of(v, self.bins)] += 1;
        }
        h
    }

    pub fn target_histogram(&self) -> Vec<usize> {
        self.histogram(&self.target_values)
    }

    pub fn clutter_histogram(&self) -> Vec<usize> {
        self.histogram(&self.clutter_values)
    }

    /// Empirical `P(score <= t)` over target chips; `None` without targets.
    pub fn target_cdf(&self, t: f64) -> Option<f64> {
        if self.target_values.is_empty() {
            return None;
        }
        let k = self.target_values.partition_point(|&v| v <= t);
        Some(k as f64 / self.target_values.len() as f64)
    }
}

pub fn score_distribution(results: &[CoarseResult], truths: &[usize], bins: usize) -> ScoreDistribution {
    let values: Vec<f64> = results.iter().map(|r| 1.0 - r.background_prob()).collect();
    ScoreDistribution::from_values(&values, truths, bins)
}
