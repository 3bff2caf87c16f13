use crate::data::LabelImage;
use crate::error::{Result, SaversError};
use crate::kernel::softmax;
use crate::tensor::Tensor;

/// Probabilities are clamped here before taking the log.
pub const MIN_PROB: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    /// Mean per-pixel cross entropy.
    pub value: f64,
    pub pixel_count: usize,
}

/// Pixel-averaged cross entropy between `softmax(score_map)` and the one-hot
/// labels, with its gradient with respect to the scores.
pub fn cross_entropy(score_map: &Tensor, labels: &LabelImage) -> Result<(LossValue, Tensor)> {
    let (n, h, w) = score_map.chw()?;
    if labels.labels.shape() != (h, w) {
        return Err(SaversError::Dimension(format!(
            "score map {:?} does not match label image {:?}",
            score_map.shape(),
            labels.labels.shape()
        )));
    }
    let plane = h * w;
    let mut grad = softmax(score_map);
    let mut total = 0.0;
    for (p, &label) in labels.labels.data().iter().enumerate() {
        if label >= n {
            return Err(SaversError::Data(format!(
                "label {label} at pixel ({}, {}) is outside 0..{n}",
                p / w,
                p % w
            )));
        }
        let q = &mut grad.data_mut()[label * plane + p];
        total -= q.max(MIN_PROB).ln();
        *q -= 1.0;
    }
    grad.scale(1.0 / plane as f64);
    Ok((
        LossValue {
            value: total / plane as f64,
            pixel_count: plane,
        },
        grad,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::LabelMap;

    fn labels(h: usize, w: usize, data: Vec<usize>, n: usize) -> LabelImage {
        LabelImage::new(LabelMap::new(h, w, data).unwrap(), n).unwrap()
    }

    #[test]
    fn uniform_logits_give_ln_classes() {
        for n in [2, 5, 11] {
            let (loss, _) = cross_entropy(&Tensor::zeros(&[n, 3, 4]), &labels(3, 4, vec![1; 12], n)).unwrap();
            assert!((loss.value - (n as f64).ln()).abs() < 1e-12);
            assert_eq!(loss.pixel_count, 12);
        }
        let (loss, _) = cross_entropy(&Tensor::zeros(&[11, 2, 2]), &labels(2, 2, vec![0, 3, 10, 4], 11)).unwrap();
        assert!((loss.value - 2.397_895_272_798_371).abs() < 1e-9);
    }

    #[test]
    fn confident_correct_is_near_zero() {
        let lab = vec![0, 2, 1, 2];
        let scores = Tensor::from_fn(&[3, 2, 2], |i| if lab[i % 4] == i / 4 { 50.0 } else { 0.0 });
        let (loss, _) = cross_entropy(&scores, &labels(2, 2, lab, 3)).unwrap();
        assert!(loss.value < 1e-6 && loss.value >= 0.0);
    }

    #[test]
    fn out_of_range_label_names_pixel() {
        let mut map = LabelMap::filled(2, 3, 0);
        map.set(1, 2, 4);
        let img = LabelImage {
            labels: map,
            num_classes: 5,
        };
        let err = cross_entropy(&Tensor::zeros(&[3, 2, 3]), &img).unwrap_err();
        assert!(err.to_string().contains("(1, 2)") && err.to_string().contains('4'), "{err}");
    }
}
