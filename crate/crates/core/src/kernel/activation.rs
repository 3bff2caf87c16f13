use rand::Rng;

use crate::error::{Result, SaversError};
use crate::tensor::Tensor;

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// Passes the gradient where the cached input is strictly positive.
pub fn relu_backward(grad_out: &Tensor, cached_input: &Tensor) -> Result<Tensor> {
    grad_out.expect_same_shape(cached_input)?;
    let data = grad_out
        .data()
        .iter()
        .zip(cached_input.data())
        .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(grad_out.shape().to_vec(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Eval,
}

/// Per-element multipliers applied by a dropout call: `0` for dropped
/// elements, `1/(1-rate)` for survivors.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask(pub Vec<f64>);

impl DropoutMask {
    pub fn keep_all(len: usize) -> Self {
        DropoutMask(vec![1.0; len])
    }
}

/// Inverted dropout. Draws exactly one uniform per element in train mode
/// (even at rate 0), nothing in eval mode.
pub fn dropout<R: Rng + ?Sized>(
    input: &Tensor,
    rate: f64,
    mode: DropoutMode,
    rng: &mut R,
) -> Result<(Tensor, DropoutMask)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(SaversError::Config(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    match mode {
        DropoutMode::Eval => Ok((input.clone(), DropoutMask::keep_all(input.len()))),
        DropoutMode::Train => {
            let keep_scale = 1.0 / (1.0 - rate);
            let mask: Vec<f64> = (0..input.len())
                .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep_scale })
                .collect();
            let out = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
            Ok((Tensor::new(input.shape().to_vec(), out)?, DropoutMask(mask)))
        }
    }
}

pub fn dropout_backward(grad_out: &Tensor, mask: &DropoutMask) -> Result<Tensor> {
    if mask.0.len() != grad_out.len() {
        return Err(SaversError::Corruption(format!(
            "dropout mask of {} entries for gradient {:?}",
            mask.0.len(),
            grad_out.shape()
        )));
    }
    let data = grad_out.data().iter().zip(&mask.0).map(|(g, m)| g * m).collect();
    Tensor::new(grad_out.shape().to_vec(), data)
}

/// Softmax over axis 0 (the class axis) independently at every position of
/// the remaining axes. Uses max subtraction so large logits do not overflow.
pub fn softmax(input: &Tensor) -> Tensor {
    let classes = input.shape()[0];
    let positions = input.len() / classes;
    let src = input.data();
    let mut out = vec![0.0; input.len()];
    let mut buf = vec![0.0; classes];
    for p in 0..positions {
        let mut max = f64::NEG_INFINITY;
        for k in 0..classes {
            buf[k] = src[k * positions + p];
            max = max.max(buf[k]);
        }
        let mut total = 0.0;
        for v in buf.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for k in 0..classes {
            out[k * positions + p] = buf[k] / total;
        }
    }
    Tensor::new(input.shape().to_vec(), out).expect("softmax preserves shape")
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn relu_forward_and_subgradient() {
        let x = Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&Tensor::full(&[3], 5.0), &x).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn dropout_eval_and_zero_rate_are_identity() {
        let x = Tensor::from_fn(&[1, 4, 4], |i| i as f64 - 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (y, _) = dropout(&x, 0.7, DropoutMode::Eval, &mut rng).unwrap();
        assert_eq!(y, x);
        let (y, mask) = dropout(&x, 0.0, DropoutMode::Train, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(mask.0.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn dropout_rate_validated() {
        let x = Tensor::zeros(&[2]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for rate in [1.0, -0.1, f64::NAN] {
            assert!(matches!(dropout(&x, rate, DropoutMode::Eval, &mut rng), Err(SaversError::Config(_))));
        }
    }

    #[test]
    fn dropout_mean_preserved() {
        let x = Tensor::full(&[100_000], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let (y, mask) = dropout(&x, 0.5, DropoutMode::Train, &mut rng).unwrap();
        let mean = y.sum() / y.len() as f64;
        assert!((0.98..=1.02).contains(&mean), "mean {mean}");
        let g = dropout_backward(&Tensor::full(&[100_000], 1.0), &mask).unwrap();
        assert_eq!(g, y);
    }

    #[test]
    fn dropout_is_deterministic_per_seed() {
        let x = Tensor::from_fn(&[64], |i| i as f64);
        let a = dropout(&x, 0.3, DropoutMode::Train, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = dropout(&x, 0.3, DropoutMode::Train, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.0.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   b.0.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn softmax_uniform_and_stable() {
        let p = softmax(&Tensor::zeros(&[11, 2, 3]));
        assert!(p.data().iter().all(|&v| (v - 1.0 / 11.0).abs() < 1e-15));
        let q = softmax(&Tensor::new(vec![2], vec![1000.0, 0.0]).unwrap());
        assert!((q.data()[0] - 1.0).abs() < 1e-15);
        assert!(q.data()[1] >= 0.0 && q.data()[1] < 1e-300 || q.data()[1] == 0.0);
        assert!(q.is_finite());
    }
}
