//! 2-D convolution lowered to GEMM through an im2col buffer, one sample at a
//! time. Column buffers are rebuilt in the backward pass instead of being kept
//! on the tape.

use super::real::{gemm, MatView};
use super::Real;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], weight: &[usize], stride: usize, padding: usize) -> Result<Self> {
        let [batch, in_channels, height, width] = *input else {
            return Err(Error::shape(
                "conv2d",
                format!("input must be NCHW, got {input:?}"),
            ));
        };
        let [out_channels, weight_in, kh, kw] = *weight else {
            return Err(Error::shape(
                "conv2d",
                format!("weight must be OIKK, got {weight:?}"),
            ));
        };
        if weight_in != in_channels {
            return Err(Error::shape(
                "conv2d",
                format!("input has {in_channels} channels (dim 1) but weight expects {weight_in} (dim 1)"),
            ));
        }
        if kh != kw || kh == 0 {
            return Err(Error::shape(
                "conv2d",
                format!("kernel must be square and non-empty, got {kh}x{kw}"),
            ));
        }
        if stride == 0 {
            return Err(Error::shape("conv2d", "stride must be positive"));
        }
        if height + 2 * padding < kh || width + 2 * padding < kw {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {kh} does not fit {height}x{width} input with padding {padding}"),
            ));
        }
        Ok(ConvGeometry {
            batch,
            in_channels,
            height,
            width,
            out_channels,
            kernel: kh,
            stride,
            padding,
            out_height: (height + 2 * padding - kh) / stride + 1,
            out_width: (width + 2 * padding - kw) / stride + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn positions(&self) -> usize {
        self.out_height * self.out_width
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [
            self.batch,
            self.out_channels,
            self.out_height,
            self.out_width,
        ]
    }
}

/// Fills `cols` (patch_len x positions, row-major) from one CHW sample.
fn im2col<T: Real>(x: &[T], g: &ConvGeometry, cols: &mut [T]) {
    let (k, s, p) = (g.kernel, g.stride, g.padding as isize);
    let positions = g.positions();
    for ci in 0..g.in_channels {
        let plane = &x[ci * g.height * g.width..(ci + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let dst = &mut cols[row * positions..(row + 1) * positions];
                for oy in 0..g.out_height {
                    let iy = (oy * s + ki) as isize - p;
                    let out_row = &mut dst[oy * g.out_width..(oy + 1) * g.out_width];
                    if iy < 0 || iy >= g.height as isize {
                        out_row.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        let ix = (ox * s + kj) as isize - p;
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

/// Scatter-adds `cols` back into one CHW gradient sample.
fn col2im<T: Real>(cols: &[T], g: &ConvGeometry, dx: &mut [T]) {
    let (k, s, p) = (g.kernel, g.stride, g.padding as isize);
    let positions = g.positions();
    for ci in 0..g.in_channels {
        let plane = &mut dx[ci * g.height * g.width..(ci + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src = &cols[row * positions..(row + 1) * positions];
                for oy in 0..g.out_height {
                    let iy = (oy * s + ki) as isize - p;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..g.out_width {
                        let ix = (ox * s + kj) as isize - p;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] += src[oy * g.out_width + ox];
                        }
                    }
                }
            }
        }
    }
}

pub fn forward<T: Real>(x: &[T], w: &[T], g: &ConvGeometry) -> Vec<T> {
    let (pl, pos) = (g.patch_len(), g.positions());
    let in_len = g.in_channels * g.height * g.width;
    let out_len = g.out_channels * pos;
    let mut out = vec![T::zero(); g.batch * out_len];
    let mut cols = vec![T::zero(); pl * pos];
    for n in 0..g.batch {
        im2col(&x[n * in_len..(n + 1) * in_len], g, &mut cols);
        gemm(
            w,
            MatView::row_major(g.out_channels, pl),
            &cols,
            MatView::row_major(pl, pos),
            T::zero(),
            &mut out[n * out_len..(n + 1) * out_len],
            MatView::row_major(g.out_channels, pos),
        );
    }
    out
}

/// Returns `(d input, d weight)`, each computed only when requested.
pub fn backward<T: Real>(
    x: &[T],
    w: &[T],
    dy: &[T],
    g: &ConvGeometry,
    want_dx: bool,
    want_dw: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let (pl, pos) = (g.patch_len(), g.positions());
    let in_len = g.in_channels * g.height * g.width;
    let out_len = g.out_channels * pos;
    let mut dx = want_dx.then(|| vec![T::zero(); g.batch * in_len]);
    let mut dw = want_dw.then(|| vec![T::zero(); w.len()]);
    let mut cols = vec![T::zero(); pl * pos];
    let mut dcols = vec![T::zero(); pl * pos];
    for n in 0..g.batch {
        let dy_n = &dy[n * out_len..(n + 1) * out_len];
        if let Some(dw) = dw.as_mut() {
            im2col(&x[n * in_len..(n + 1) * in_len], g, &mut cols);
            gemm(
                dy_n,
                MatView::row_major(g.out_channels, pos),
                &cols,
                MatView::transposed(pl, pos),
                T::one(),
                dw,
                MatView::row_major(g.out_channels, pl),
            );
        }
        if let Some(dx) = dx.as_mut() {
            gemm(
                w,
                MatView::transposed(g.out_channels, pl),
                dy_n,
                MatView::row_major(g.out_channels, pos),
                T::zero(),
                &mut dcols,
                MatView::row_major(pl, pos),
            );
            col2im(&dcols, g, &mut dx[n * in_len..(n + 1) * in_len]);
        }
    }
    (dx, dw)
}
