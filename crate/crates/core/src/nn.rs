//! Forward-only layer kernels.
//!
//! All kernels are pure: they borrow their inputs and allocate a fresh
//! output, so they can be called from any number of threads at once.

use alloc::format;
use alloc::vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams {
    pub stride: usize,
    /// Symmetric zero padding on both spatial axes.
    pub padding: usize,
    pub groups: usize,
}

impl ConvParams {
    pub const fn new(stride: usize, padding: usize, groups: usize) -> Self {
        ConvParams {
            stride,
            padding,
            groups,
        }
    }
}

/// Cross-channel local response normalization constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrnParams {
    /// Half-width of the channel window; the window spans `2r + 1` channels.
    pub depth_radius: usize,
    pub k: f32,
    pub alpha: f32,
    pub beta: f32,
}

impl LrnParams {
    /// The constants of the original AlexNet normalization layers.
    pub const ALEXNET: LrnParams = LrnParams {
        depth_radius: 2,
        k: 2.0,
        alpha: 1e-4,
        beta: 0.75,
    };

    pub fn validate(&self) -> Result<()> {
        if self.depth_radius == 0 || !(self.k > 0.0) || !(self.alpha >= 0.0) || !(self.beta > 0.0) {
            return Err(Error::config(format!(
                "LRN needs depth_radius >= 1, k > 0, alpha >= 0, beta > 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

impl Default for LrnParams {
    fn default() -> Self {
        Self::ALEXNET
    }
}

/// Output length of a strided window sweep that must tile exactly.
fn conv_out_len(input: usize, pad: usize, kernel: usize, stride: usize, axis: &str) -> Result<usize> {
    let span = input + 2 * pad;
    if stride == 0 {
        return Err(Error::config("stride must be positive"));
    }
    if span < kernel {
        return Err(Error::config(format!(
            "kernel {kernel} larger than padded {axis} {span}"
        )));
    }
    if (span - kernel) % stride != 0 {
        return Err(Error::config(format!(
            "non-integral output {axis}: ({input} + 2*{pad} - {kernel}) / {stride}"
        )));
    }
    Ok((span - kernel) / stride + 1)
}

/// Output spatial size of [`conv2d`], or a configuration error.
pub fn conv_output_hw(
    h: usize,
    w: usize,
    kernel_h: usize,
    kernel_w: usize,
    params: ConvParams,
) -> Result<(usize, usize)> {
    Ok((
        conv_out_len(h, params.padding, kernel_h, params.stride, "height")?,
        conv_out_len(w, params.padding, kernel_w, params.stride, "width")?,
    ))
}

/// Grouped 2-D convolution with bias.
pub fn conv2d(input: &Tensor, weights: &Tensor, bias: &Tensor, params: ConvParams) -> Result<Tensor> {
    const OP: &str = "conv2d";
    let (h, w, cin) = input.hwc(OP)?;
    let (filters, kh, kw, cg) = match *weights.shape() {
        [f, kh, kw, c] => (f, kh, kw, c),
        _ => {
            return Err(Error::Dimension {
                op: OP,
                axis: "weight rank",
                expected: 4,
                found: weights.rank(),
            })
        }
    };
    let groups = params.groups;
    if groups == 0 {
        return Err(Error::config("groups must be positive"));
    }
    if cg * groups != cin {
        return Err(Error::Dimension {
            op: OP,
            axis: "input channels",
            expected: cg * groups,
            found: cin,
        });
    }
    if filters % groups != 0 {
        return Err(Error::config(format!(
            "filter count {filters} not divisible by groups {groups}"
        )));
    }
    if bias.rank() != 1 || bias.len() != filters {
        return Err(Error::Dimension {
            op: OP,
            axis: "bias length",
            expected: filters,
            found: bias.len(),
        });
    }
    let (oh, ow) = conv_output_hw(h, w, kh, kw, params)?;
    let filters_per_group = filters / groups;
    let stride = params.stride;
    let pad = params.padding;
    let src = input.data();
    let wts = weights.data();
    let b = bias.data();

    let mut out = vec![0.0f32; oh * ow * filters];
    for oy in 0..oh {
        for ox in 0..ow {
            let acc = &mut out[(oy * ow + ox) * filters..][..filters];
            acc.copy_from_slice(b);
            for ky in 0..kh {
                let iy = (oy * stride + ky) as isize - pad as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let pixel = &src[(iy as usize * w + ix as usize) * cin..][..cin];
                    for (f, slot) in acc.iter_mut().enumerate() {
                        let g = f / filters_per_group;
                        let x = &pixel[g * cg..][..cg];
                        let k = &wts[((f * kh + ky) * kw + kx) * cg..][..cg];
                        *slot += dot(x, k);
                    }
                }
            }
        }
    }
    Tensor::new(vec![oh, ow, filters], out)
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// `out[c] = in[c] / (k + alpha * sum_{|j-c| <= r} in[j]^2)^beta` at every pixel.
pub fn lrn(input: &Tensor, params: LrnParams) -> Result<Tensor> {
    params.validate()?;
    let (_, _, c) = input.hwc("lrn")?;
    let r = params.depth_radius;
    let mut out = input.clone();
    let mut squares = vec![0.0f32; c];
    for (pixel_in, pixel_out) in input
        .data()
        .chunks_exact(c)
        .zip(out.data_mut().chunks_exact_mut(c))
    {
        for (s, &v) in squares.iter_mut().zip(pixel_in) {
            *s = v * v;
        }
        for ch in 0..c {
            let lo = ch.saturating_sub(r);
            let hi = (ch + r).min(c - 1);
            let sum: f32 = squares[lo..=hi].iter().sum();
            let denom = libm::powf(params.k + params.alpha * sum, params.beta);
            pixel_out[ch] = pixel_in[ch] / denom;
        }
    }
    Ok(out)
}

/// Max pooling over square windows; trailing rows/columns that do not fill a
/// window are dropped.
pub fn maxpool(input: &Tensor, window: usize, stride: usize) -> Result<Tensor> {
    let (h, w, c) = input.hwc("maxpool")?;
    let (oh, ow) = pool_output_hw(h, w, window, stride)?;
    let src = input.data();
    let mut out = vec![f32::NEG_INFINITY; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let dst = &mut out[(oy * ow + ox) * c..][..c];
            for y in oy * stride..oy * stride + window {
                for x in ox * stride..ox * stride + window {
                    let pixel = &src[(y * w + x) * c..][..c];
                    for (d, &v) in dst.iter_mut().zip(pixel) {
                        if v > *d {
                            *d = v;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![oh, ow, c], out)
}

pub fn pool_output_hw(h: usize, w: usize, window: usize, stride: usize) -> Result<(usize, usize)> {
    if window == 0 || stride == 0 {
        return Err(Error::config("pool window and stride must be positive"));
    }
    if window > h || window > w {
        return Err(Error::config(format!(
            "pool window {window} larger than input {h}x{w}"
        )));
    }
    Ok(((h - window) / stride + 1, (w - window) / stride + 1))
}

/// `weights · flatten(input) + bias`.
pub fn fully_connected(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    const OP: &str = "fully_connected";
    let (rows, cols) = match *weights.shape() {
        [r, c] => (r, c),
        _ => {
            return Err(Error::Dimension {
                op: OP,
                axis: "weight rank",
                expected: 2,
                found: weights.rank(),
            })
        }
    };
    if input.len() != cols {
        return Err(Error::Dimension {
            op: OP,
            axis: "input length",
            expected: cols,
            found: input.len(),
        });
    }
    if bias.rank() != 1 || bias.len() != rows {
        return Err(Error::Dimension {
            op: OP,
            axis: "bias length",
            expected: rows,
            found: bias.len(),
        });
    }
    let x = input.data();
    let out = weights
        .data()
        .chunks_exact(cols)
        .zip(bias.data())
        .map(|(row, &b)| b + dot(row, x))
        .collect();
    Ok(Tensor::vector(out))
}

/// Dropout at inference time passes activations through untouched.
pub fn dropout_inference(input: &Tensor) -> Tensor {
    input.clone()
}
