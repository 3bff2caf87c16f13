use crate::error::{Result, SaversError};
use crate::tensor::Tensor;

/// Flat input offsets of the winning element of every 2x2 window,
/// in output order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolArgmax(pub Vec<usize>);

impl PoolArgmax {
    /// `(row, col)` of the winner for output element `i` of a `[C,H,W]` input.
    pub fn position(&self, i: usize, input_w: usize, input_h: usize) -> (usize, usize) {
        let flat = self.0[i] % (input_h * input_w);
        (flat / input_w, flat % input_w)
    }
}

/// 2x2 non-overlapping max pooling. Ties go to the first element in
/// row-major order within the window.
pub fn maxpool2(input: &Tensor) -> Result<(Tensor, PoolArgmax)> {
    let (c, h, w) = input.chw()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(SaversError::Dimension(format!(
            "max pooling needs even height and width, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let src = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let top = base + 2 * oy * w + 2 * ox;
                let candidates = [top, top + 1, top + w, top + w + 1];
                let mut best = candidates[0];
                for &idx in &candidates[1..] {
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                out.push(src[best]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![c, oh, ow], out)?, PoolArgmax(arg)))
}

pub fn maxpool2_backward(grad_out: &Tensor, argmax: &PoolArgmax, input_shape: &[usize]) -> Result<Tensor> {
    if argmax.0.len() != grad_out.len() {
        return Err(SaversError::Corruption(format!(
            "{} argmax entries for gradient of {} elements",
            argmax.0.len(),
            grad_out.len()
        )));
    }
    let mut grad_in = Tensor::new(input_shape.to_vec(), vec![0.0; input_shape.iter().product()])?;
    let n = grad_in.len();
    let dst = grad_in.data_mut();
    for (&idx, &g) in argmax.0.iter().zip(grad_out.data()) {
        if idx >= n {
            return Err(SaversError::Corruption(format!(
                "argmax index {idx} outside input of {n} elements"
            )));
        }
        dst[idx] += g;
    }
    Ok(grad_in)
}

/// Global average pooling: `[C,H,W] -> [C,1,1]`.
pub fn avgpool(input: &Tensor) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    let n = (h * w) as f64;
    let means = input.data().chunks(h * w).map(|p| p.iter().sum::<f64>() / n).collect();
    Tensor::new(vec![c, 1, 1], means)
}

pub fn avgpool_backward(grad_out: &Tensor, input_shape: &[usize]) -> Result<Tensor> {
    let [c, h, w] = input_shape[..] else {
        return Err(SaversError::Dimension(format!("expected [C,H,W] input shape, got {input_shape:?}")));
    };
    if grad_out.len() != c {
        return Err(SaversError::Dimension(format!(
            "pooled gradient {:?} does not match {c} channels",
            grad_out.shape()
        )));
    }
    let n = (h * w) as f64;
    let mut data = Vec::with_capacity(c * h * w);
    for &g in grad_out.data() {
        data.extend(std::iter::repeat_n(g / n, h * w));
    }
    Tensor::new(vec![c, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_of_four() {
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, arg) = maxpool2(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(arg.position(0, 2, 2), (1, 1));
    }

    #[test]
    fn ties_pick_first_in_scan_order() {
        let (y, arg) = maxpool2(&Tensor::full(&[2, 4, 4], 3.0)).unwrap();
        assert!(y.data().iter().all(|&v| v == 3.0));
        for i in 0..arg.0.len() {
            let (r, c) = arg.position(i, 4, 4);
            assert_eq!((r % 2, c % 2), (0, 0));
        }
    }

    #[test]
    fn odd_extent_rejected() {
        assert!(matches!(maxpool2(&Tensor::zeros(&[1, 3, 4])), Err(SaversError::Dimension(_))));
    }

    #[test]
    fn backward_routes_to_argmax() {
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (_, arg) = maxpool2(&x).unwrap();
        let g = maxpool2_backward(&Tensor::full(&[1, 1, 1], 1.0), &arg, x.shape()).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 0.0, 1.0]);
        let z = maxpool2_backward(&Tensor::zeros(&[1, 1, 1]), &arg, x.shape()).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn corrupt_index_rejected() {
        let arg = PoolArgmax(vec![7]);
        let err = maxpool2_backward(&Tensor::full(&[1, 1, 1], 1.0), &arg, &[1, 2, 2]).unwrap_err();
        assert!(matches!(err, SaversError::Corruption(_)));
    }

    #[test]
    fn average_pooling() {
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(avgpool(&x).unwrap().data(), &[2.5]);
        let c = avgpool(&Tensor::full(&[2, 3, 5], -1.25)).unwrap();
        assert_eq!(c.data(), &[-1.25, -1.25]);
        let g = avgpool_backward(&Tensor::full(&[1, 1, 1], 4.0), &[1, 2, 2]).unwrap();
        assert_eq!(g.data(), &[1.0; 4]);
    }
}
