use super::{debug_check_finite, gemm, Element, Strides, Tensor};
use crate::error::{Error, Result};

/// Spatial output extent of a convolution or pooling window sweep.
pub fn conv_output_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    out_h: usize,
    out_w: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn new<T: Element>(
        input: &Tensor<T>,
        kernels: &Tensor<T>,
        stride: usize,
        pad: usize,
    ) -> Result<(Self, usize)> {
        let (c, h, w) = input.chw()?;
        let [o, i, kh, kw] = kernels.shape()[..] else {
            return Err(Error::shape(
                "conv2d",
                format!("kernels must be OIHW, got {:?}", kernels.shape()),
            ));
        };
        if i != c {
            return Err(Error::shape(
                "conv2d",
                format!("kernels expect {i} input channels, input has {c}"),
            ));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d stride must be positive"));
        }
        let (Some(out_h), Some(out_w)) = (
            conv_output_extent(h, kh, stride, pad),
            conv_output_extent(w, kw, stride, pad),
        ) else {
            return Err(Error::shape(
                "conv2d",
                format!("input {h}x{w} with pad {pad} is smaller than kernel {kh}x{kw}"),
            ));
        };
        Ok((
            Geometry {
                channels: c,
                height: h,
                width: w,
                kh,
                kw,
                out_h,
                out_w,
                stride,
                pad,
            },
            o,
        ))
    }

    fn patch_len(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Source pixel for output row/col and kernel offset, `None` inside the padding.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky).checked_sub(self.pad)?;
        let x = (ox * self.stride + kx).checked_sub(self.pad)?;
        (y < self.height && x < self.width).then_some((y, x))
    }

    /// Unfolds the input into a `patch_len × positions` matrix.
    fn im2col<T: Element>(&self, input: &[T]) -> Vec<T> {
        let p = self.positions();
        let mut cols = vec![T::zero(); self.patch_len() * p];
        for c in 0..self.channels {
            let plane = &input[c * self.height * self.width..][..self.height * self.width];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            if let Some((y, x)) = self.source(oy, ox, ky, kx) {
                                dst[oy * self.out_w + ox] = plane[y * self.width + x];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`Geometry::im2col`]: folds column gradients back onto the input.
    fn col2im<T: Element>(&self, cols: &[T]) -> Vec<T> {
        let p = self.positions();
        let mut out = vec![T::zero(); self.channels * self.height * self.width];
        for c in 0..self.channels {
            let plane = &mut out[c * self.height * self.width..][..self.height * self.width];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        for ox in 0..self.out_w {
                            if let Some((y, x)) = self.source(oy, ox, ky, kx) {
                                plane[y * self.width + x] += src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// 2-D cross-correlation (no kernel flip) of a CHW input with OIHW kernels.
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (g, out_channels) = Geometry::new(input, kernels, stride, pad)?;
    if bias.len() != out_channels {
        return Err(Error::shape(
            "conv2d",
            format!("bias has {} entries for {out_channels} kernels", bias.len()),
        ));
    }
    let p = g.positions();
    let k = g.patch_len();
    let mut out = vec![T::zero(); out_channels * p];
    for (o, row) in out.chunks_mut(p).enumerate() {
        row.fill(bias.data()[o]);
    }
    let cols = g.im2col(input.data());
    gemm(
        out_channels,
        k,
        p,
        kernels.data(),
        Strides::row_major(k),
        &cols,
        Strides::row_major(p),
        &mut out,
        true,
    );
    let out = Tensor::new(vec![out_channels, g.out_h, g.out_w], out)?;
    debug_check_finite("conv2d", &out)?;
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to its three inputs.
#[derive(Clone, Debug)]
pub struct Conv2dGrads<T> {
    pub input: Tensor<T>,
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Backward pass of [`conv2d`]. Set `want_params` to false to skip the
/// kernel and bias gradients (they are returned as zeros).
pub fn conv2d_backward<T: Element>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    stride: usize,
    pad: usize,
    grad_out: &Tensor<T>,
    want_params: bool,
) -> Result<Conv2dGrads<T>> {
    let (g, out_channels) = Geometry::new(input, kernels, stride, pad)?;
    let expected = [out_channels, g.out_h, g.out_w];
    if grad_out.shape() != expected {
        return Err(Error::shape(
            "conv2d_backward",
            format!(
                "output gradient {:?}, expected {expected:?}",
                grad_out.shape()
            ),
        ));
    }
    let p = g.positions();
    let k = g.patch_len();

    let mut grad_cols = vec![T::zero(); k * p];
    gemm(
        k,
        out_channels,
        p,
        kernels.data(),
        Strides::transposed(k),
        grad_out.data(),
        Strides::row_major(p),
        &mut grad_cols,
        false,
    );
    let grad_input = Tensor::new(input.shape().to_vec(), g.col2im(&grad_cols))?;

    let mut grad_kernels = Tensor::zeros(kernels.shape());
    let mut grad_bias = Tensor::zeros(&[out_channels]);
    if want_params {
        let cols = g.im2col(input.data());
        gemm(
            out_channels,
            p,
            k,
            grad_out.data(),
            Strides::row_major(p),
            &cols,
            Strides::transposed(p),
            grad_kernels.data_mut(),
            false,
        );
        for (o, row) in grad_out.data().chunks(p).enumerate() {
            grad_bias.data_mut()[o] = row.iter().copied().sum();
        }
    }
    Ok(Conv2dGrads {
        input: grad_input,
        kernels: grad_kernels,
        bias: grad_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_ones_sums_window() {
        let x = Tensor::<f32>::full(&[1, 3, 3], 1.0);
        let k = Tensor::<f32>::full(&[1, 1, 3, 3], 1.0);
        let b = Tensor::<f32>::zeros(&[1]);
        let y = conv2d(&x, &k, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn centered_delta_is_identity() {
        let x = Tensor::<f32>::from_fn(&[2, 5, 4], |i| (i as f32 * 0.37).sin());
        let mut k = Tensor::<f32>::zeros(&[2, 2, 3, 3]);
        // kernel o reads only channel o at the center tap
        k.data_mut()[4] = 1.0;
        k.data_mut()[3 * 9 + 4] = 1.0;
        let y = conv2d(&x, &k, &Tensor::zeros(&[2]), 1, 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn output_extent_follows_stride_formula() {
        let x = Tensor::<f32>::zeros(&[1, 7, 8]);
        let k = Tensor::<f32>::zeros(&[3, 1, 3, 3]);
        let y = conv2d(&x, &k, &Tensor::zeros(&[3]), 2, 1).unwrap();
        assert_eq!(y.shape(), &[3, 4, 4]);
    }

    #[test]
    fn rejects_channel_mismatch_and_tiny_input() {
        let x = Tensor::<f32>::zeros(&[2, 4, 4]);
        let k = Tensor::<f32>::zeros(&[1, 3, 3, 3]);
        assert!(matches!(
            conv2d(&x, &k, &Tensor::zeros(&[1]), 1, 1),
            Err(Error::Shape { .. })
        ));
        let x = Tensor::<f32>::zeros(&[3, 2, 2]);
        assert!(matches!(
            conv2d(&x, &k, &Tensor::zeros(&[1]), 1, 0),
            Err(Error::Shape { .. })
        ));
        assert!(conv2d(&x, &k, &Tensor::zeros(&[2]), 1, 1).is_err());
    }
}
