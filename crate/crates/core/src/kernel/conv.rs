//! 2-D cross-correlation, its gradients, and the transposed (fractionally
//! strided) convolution, all lowered to im2col + GEMM.

use serde::{Deserialize, Serialize};

use super::gemm::{matmul, MatRef};
use crate::error::{Result, SaversError};
use crate::tensor::Tensor;

/// Kernel size, stride and explicit per-side zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_bottom: usize,
    pub pad_left: usize,
    pub pad_right: usize,
}

impl ConvSpec {
    /// Square kernel, stride 1, symmetric padding.
    pub fn square(kernel: usize, pad: usize) -> Self {
        ConvSpec {
            kernel_h: kernel,
            kernel_w: kernel,
            stride: 1,
            pad_top: pad,
            pad_bottom: pad,
            pad_left: pad,
            pad_right: pad,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_h == 0 || self.kernel_w == 0 || self.stride == 0 {
            return Err(SaversError::Config(format!(
                "kernel dims and stride must be >= 1: {self:?}"
            )));
        }
        Ok(())
    }

    /// Spatial extent produced by a forward convolution over `h x w`.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        self.validate()?;
        let ph = h + self.pad_top + self.pad_bottom;
        let pw = w + self.pad_left + self.pad_right;
        if ph < self.kernel_h || pw < self.kernel_w {
            return Err(SaversError::Dimension(format!(
                "input {h}x{w} with padding is smaller than kernel {}x{}",
                self.kernel_h, self.kernel_w
            )));
        }
        Ok((
            (ph - self.kernel_h) / self.stride + 1,
            (pw - self.kernel_w) / self.stride + 1,
        ))
    }

    /// Spatial extent produced by the transposed convolution over `h x w`.
    pub fn transposed_output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        self.validate()?;
        let full_h = (h - 1) * self.stride + self.kernel_h;
        let full_w = (w - 1) * self.stride + self.kernel_w;
        let crop_h = self.pad_top + self.pad_bottom;
        let crop_w = self.pad_left + self.pad_right;
        if full_h <= crop_h || full_w <= crop_w {
            return Err(SaversError::Dimension(format!(
                "transposed convolution of {h}x{w} with {self:?} has empty output"
            )));
        }
        Ok((full_h - crop_h, full_w - crop_w))
    }
}

/// Unfolds receptive fields into a `[C*kh*kw, oh*ow]` matrix.
fn im2col(data: &[f64], c: usize, h: usize, w: usize, spec: &ConvSpec, oh: usize, ow: usize) -> Vec<f64> {
    let (kh, kw, s) = (spec.kernel_h, spec.kernel_w, spec.stride);
    let plane = oh * ow;
    let mut cols = vec![0.0; c * kh * kw * plane];
    for ch in 0..c {
        let src = &data[ch * h * w..(ch + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ch * kh + ky) * kw + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let iy = (oy * s + ky) as isize - spec.pad_top as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = &src[iy as usize * w..(iy as usize + 1) * w];
                    let dst_row = &mut dst[oy * ow..(oy + 1) * ow];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * s + kx) as isize - spec.pad_left as isize;
                        if ix >= 0 && ix < w as isize {
                            *d = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters columns back, summing overlaps.
fn col2im(cols: &[f64], c: usize, h: usize, w: usize, spec: &ConvSpec, oh: usize, ow: usize) -> Vec<f64> {
    let (kh, kw, s) = (spec.kernel_h, spec.kernel_w, spec.stride);
    let plane = oh * ow;
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        let dst = &mut out[ch * h * w..(ch + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ch * kh + ky) * kw + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let iy = (oy * s + ky) as isize - spec.pad_top as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = iy as usize * w;
                    for ox in 0..ow {
                        let ix = (ox * s + kx) as isize - spec.pad_left as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[base + ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

fn kernel_dims(kernels: &Tensor, spec: &ConvSpec) -> Result<(usize, usize)> {
    match kernels.shape()[..] {
        [a, b, kh, kw] if kh == spec.kernel_h && kw == spec.kernel_w => Ok((a, b)),
        _ => Err(SaversError::Dimension(format!(
            "kernel shape {:?} does not match {}x{} conv spec",
            kernels.shape(),
            spec.kernel_h,
            spec.kernel_w
        ))),
    }
}

/// Cross-correlation of `input [C,H,W]` with `kernels [F,C,kh,kw]` plus `bias [F]`.
pub fn conv2d(input: &Tensor, kernels: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    let (f, kc) = kernel_dims(kernels, spec)?;
    if kc != c {
        return Err(SaversError::Dimension(format!(
            "input {:?} has {c} channels but kernels {:?} expect {kc}",
            input.shape(),
            kernels.shape()
        )));
    }
    if bias.shape() != [f] {
        return Err(SaversError::Dimension(format!(
            "bias {:?} does not match kernels {:?}",
            bias.shape(),
            kernels.shape()
        )));
    }
    let (oh, ow) = spec.output_hw(h, w)?;
    let k = c * spec.kernel_h * spec.kernel_w;
    let cols = im2col(input.data(), c, h, w, spec, oh, ow);
    let mut out = matmul(MatRef::new(kernels.data(), f, k), MatRef::new(&cols, k, oh * ow));
    for (plane, b) in out.chunks_mut(oh * ow).zip(bias.data()) {
        plane.iter_mut().for_each(|v| *v += b);
    }
    Tensor::new(vec![f, oh, ow], out)
}

/// Gradients of [`conv2d`] with respect to input, kernels and bias.
pub fn conv2d_backward(
    grad_out: &Tensor,
    cached_input: &Tensor,
    kernels: &Tensor,
    spec: &ConvSpec,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (c, h, w) = cached_input.chw()?;
    let (f, kc) = kernel_dims(kernels, spec)?;
    let (oh, ow) = spec.output_hw(h, w)?;
    if kc != c || grad_out.shape() != [f, oh, ow] {
        return Err(SaversError::Dimension(format!(
            "grad_out {:?} does not match forward output [{f}, {oh}, {ow}] of input {:?} and kernels {:?}",
            grad_out.shape(),
            cached_input.shape(),
            kernels.shape()
        )));
    }
    let k = c * spec.kernel_h * spec.kernel_w;
    let p = oh * ow;
    let g = MatRef::new(grad_out.data(), f, p);

    let grad_bias: Vec<f64> = grad_out.data().chunks(p).map(|plane| plane.iter().sum()).collect();

    let cols = im2col(cached_input.data(), c, h, w, spec, oh, ow);
    let grad_kernels = matmul(g, MatRef::new(&cols, k, p).t());

    let grad_cols = matmul(MatRef::new(kernels.data(), f, k).t(), g);
    let grad_input = col2im(&grad_cols, c, h, w, spec, oh, ow);

    Ok((
        Tensor::new(vec![c, h, w], grad_input)?,
        Tensor::new(kernels.shape().to_vec(), grad_kernels)?,
        Tensor::new(vec![f], grad_bias)?,
    ))
}

/// Transposed convolution of `input [C,H,W]` with `kernels [C,F,kh,kw]`.
///
/// This is exactly the input-gradient map of a [`conv2d`] whose kernels are
/// `kernels` read as `[out=C, in=F]`. With kernel 32, stride 16 and padding 8
/// on every side the output is `16H x 16W`.
pub fn transposed_conv2d(input: &Tensor, kernels: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    let (kc, f) = kernel_dims(kernels, spec)?;
    if kc != c {
        return Err(SaversError::Dimension(format!(
            "input {:?} has {c} channels but transposed kernels {:?} expect {kc}",
            input.shape(),
            kernels.shape()
        )));
    }
    let (out_h, out_w) = spec.transposed_output_hw(h, w)?;
    let k = f * spec.kernel_h * spec.kernel_w;
    let cols = matmul(MatRef::new(kernels.data(), c, k).t(), MatRef::new(input.data(), c, h * w));
    let out = col2im(&cols, f, out_h, out_w, spec, h, w);
    Tensor::new(vec![f, out_h, out_w], out)
}

/// Gradients of [`transposed_conv2d`] with respect to its input and kernels.
pub fn transposed_conv2d_backward(
    grad_out: &Tensor,
    cached_input: &Tensor,
    kernels: &Tensor,
    spec: &ConvSpec,
) -> Result<(Tensor, Tensor)> {
    let (c, h, w) = cached_input.chw()?;
    let (kc, f) = kernel_dims(kernels, spec)?;
    let (out_h, out_w) = spec.transposed_output_hw(h, w)?;
    if kc != c || grad_out.shape() != [f, out_h, out_w] {
        return Err(SaversError::Dimension(format!(
            "grad_out {:?} does not match transposed output [{f}, {out_h}, {out_w}] of input {:?} and kernels {:?}",
            grad_out.shape(),
            cached_input.shape(),
            kernels.shape()
        )));
    }
    let k = f * spec.kernel_h * spec.kernel_w;
    let grad_cols = im2col(grad_out.data(), f, out_h, out_w, spec, h, w);
    let gc = MatRef::new(&grad_cols, k, h * w);
    let grad_input = matmul(MatRef::new(kernels.data(), c, k), gc);
    let grad_kernels = matmul(MatRef::new(cached_input.data(), c, h * w), gc.t());
    Ok((
        Tensor::new(vec![c, h, w], grad_input)?,
        Tensor::new(kernels.shape().to_vec(), grad_kernels)?,
    ))
}
