// Copyright 2026 The Supermask Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Raw forward/backward kernels on contiguous slices. The tape in
//! [`crate::autodiff`] owns shapes and bookkeeping; these functions only do
//! arithmetic, always in a fixed loop order.

use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    /// Returns `None` when the output size would not be a whole number.
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        pad: usize,
    ) -> Option<Self> {
        let span_h = (height + 2 * pad).checked_sub(kernel_h)?;
        let span_w = (width + 2 * pad).checked_sub(kernel_w)?;
        if stride == 0 || span_h % stride != 0 || span_w % stride != 0 {
            return None;
        }
        Some(ConvGeometry {
            channels,
            height,
            width,
            kernel_h,
            kernel_w,
            stride,
            pad,
            out_h: span_h / stride + 1,
            out_w: span_w / stride + 1,
        })
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfolds one image `[C,H,W]` into `[C·kh·kw, Ho·Wo]`.
pub fn im2col<T: Scalar>(img: &[T], g: &ConvGeometry, cols: &mut [T]) {
    let ncols = g.col_cols();
    for c in 0..g.channels {
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.height as isize {
                        line.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &img[(c * g.height + iy as usize) * g.width..][..g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.width as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into an image gradient.
pub fn col2im<T: Scalar>(cols: &[T], g: &ConvGeometry, img: &mut [T]) {
    let ncols = g.col_cols();
    for c in 0..g.channels {
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut img[(c * g.height + iy as usize) * g.width..][..g.width];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] = dst[ix as usize] + src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `out[n] = W · im2col(x[n])` for every sample.
pub fn conv2d_forward<T: Scalar>(
    x: &[T],
    w: &[T],
    batch: usize,
    filters: usize,
    g: &ConvGeometry,
) -> Vec<T> {
    let in_len = g.channels * g.height * g.width;
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let mut cols = vec![T::zero(); rows * ncols];
    let mut out = vec![T::zero(); batch * filters * ncols];
    for n in 0..batch {
        im2col(&x[n * in_len..(n + 1) * in_len], g, &mut cols);
        T::gemm(
            filters,
            rows,
            ncols,
            T::one(),
            w,
            rows as isize,
            1,
            &cols,
            ncols as isize,
            1,
            T::zero(),
            &mut out[n * filters * ncols..(n + 1) * filters * ncols],
            ncols as isize,
            1,
        );
    }
    out
}

/// Gradients of [`conv2d_forward`]. Either output may be skipped.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dout: &[T],
    batch: usize,
    filters: usize,
    g: &ConvGeometry,
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
) {
    let in_len = g.channels * g.height * g.width;
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let mut cols = vec![T::zero(); rows * ncols];
    for n in 0..batch {
        let dout_n = &dout[n * filters * ncols..(n + 1) * filters * ncols];
        if let Some(dw) = dw.as_deref_mut() {
            im2col(&x[n * in_len..(n + 1) * in_len], g, &mut cols);
            // dW[F, rows] += dout_n[F, ncols] · colsᵀ
            T::gemm(
                filters,
                ncols,
                rows,
                T::one(),
                dout_n,
                ncols as isize,
                1,
                &cols,
                1,
                ncols as isize,
                T::one(),
                dw,
                rows as isize,
                1,
            );
        }
        if let Some(dx) = dx.as_deref_mut() {
            // dcols[rows, ncols] = Wᵀ · dout_n
            T::gemm(
                rows,
                filters,
                ncols,
                T::one(),
                w,
                1,
                rows as isize,
                dout_n,
                ncols as isize,
                1,
                T::zero(),
                &mut cols,
                ncols as isize,
                1,
            );
            col2im(&cols, g, &mut dx[n * in_len..(n + 1) * in_len]);
        }
    }
}

/// 2×2 max pooling with stride 2 (odd trailing rows/columns dropped).
/// Returns outputs and the flat input index of each maximum; the first
/// maximum in scan order wins ties.
pub fn maxpool2_forward<T: Scalar>(
    x: &[T],
    planes: usize,
    height: usize,
    width: usize,
) -> (Vec<T>, Vec<usize>) {
    let (oh, ow) = (height / 2, width / 2);
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut arg = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * height * width;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + (2 * oy) * width + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * width + 2 * ox + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

/// Per-channel batch statistics over every axis except the channel axis.
/// Layout is `[N, C, spatial]`. Variance is the biased (population) one.
pub fn channel_moments<T: Scalar>(
    x: &[T],
    batch: usize,
    channels: usize,
    spatial: usize,
) -> (Vec<T>, Vec<T>) {
    let count = T::from_f64((batch * spatial) as f64);
    let mut mean = vec![T::zero(); channels];
    let mut var = vec![T::zero(); channels];
    for (c, m) in mean.iter_mut().enumerate() {
        let mut acc = T::zero();
        for n in 0..batch {
            let off = (n * channels + c) * spatial;
            for &v in &x[off..off + spatial] {
                acc = acc + v;
            }
        }
        *m = acc / count;
    }
    for c in 0..channels {
        let mut acc = T::zero();
        for n in 0..batch {
            let off = (n * channels + c) * spatial;
            for &v in &x[off..off + spatial] {
                let d = v - mean[c];
                acc = acc + d * d;
            }
        }
        var[c] = acc / count;
    }
    (mean, var)
}

/// Row-wise log-softmax with max subtraction.
pub fn log_softmax_rows<T: Scalar>(logits: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        let row = &logits[r * cols..(r + 1) * cols];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        for (o, &v) in out[r * cols..(r + 1) * cols].iter_mut().zip(row) {
            *o = v - lse;
        }
    }
    out
}
