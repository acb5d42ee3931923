//! 2-D cross-correlation via an im2col index map. The same map drives the
//! forward gather and the backward scatter, so zero and mirror padding share
//! one code path.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{Real, Tensor};
use crate::error::{Error, Result};
use crate::image::filter::mirror;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    Zero,
    Mirror,
}

const OUTSIDE: u32 = u32::MAX;

/// Geometry of one convolution with "same"-style padding of `k / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
    pub out_height: usize,
    pub out_width: usize,
    /// `[(ky, kx), (oy, ox)]` -> input pixel index or [`OUTSIDE`].
    map: Vec<u32>,
}

impl ConvGeom {
    pub fn new(channels: usize, height: usize, width: usize, kernel: usize, stride: usize, padding: Padding) -> Result<Self> {
        if kernel == 0 || kernel % 2 == 0 || stride == 0 {
            return Err(Error::invalid(format!("bad conv kernel {kernel} / stride {stride}")));
        }
        let pad = kernel / 2;
        if height + 2 * pad < kernel || width + 2 * pad < kernel {
            return Err(Error::invalid(format!("input {height}x{width} smaller than kernel {kernel}")));
        }
        let out_height = (height + 2 * pad - kernel) / stride + 1;
        let out_width = (width + 2 * pad - kernel) / stride + 1;
        let mut map = Vec::with_capacity(kernel * kernel * out_height * out_width);
        for ky in 0..kernel {
            for kx in 0..kernel {
                for oy in 0..out_height {
                    for ox in 0..out_width {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        let inside = iy >= 0 && ix >= 0 && (iy as usize) < height && (ix as usize) < width;
                        let idx = match (inside, padding) {
                            (true, _) => (iy as usize * width + ix as usize) as u32,
                            (false, Padding::Zero) => OUTSIDE,
                            (false, Padding::Mirror) => (mirror(iy, height) * width + mirror(ix, width)) as u32,
                        };
                        map.push(idx);
                    }
                }
            }
        }
        Ok(Self {
            channels,
            height,
            width,
            kernel,
            stride,
            padding,
            out_height,
            out_width,
            map,
        })
    }

    #[inline]
    fn out_pixels(&self) -> usize {
        self.out_height * self.out_width
    }

    #[inline]
    fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    /// Gathers one image (`C*H*W`) into a `[C*K*K, OH*OW]` column matrix.
    pub(crate) fn im2col<T: Real>(&self, img: &[T], cols: &mut [T]) {
        let plane = self.height * self.width;
        let kk = self.kernel * self.kernel;
        let n = self.out_pixels();
        for c in 0..self.channels {
            let src = &img[c * plane..(c + 1) * plane];
            for k in 0..kk {
                let row = &mut cols[(c * kk + k) * n..(c * kk + k + 1) * n];
                let m = &self.map[k * n..(k + 1) * n];
                for (dst, &idx) in row.iter_mut().zip(m) {
                    *dst = if idx == OUTSIDE { T::ZERO } else { src[idx as usize] };
                }
            }
        }
    }

    /// Scatter-adds a column-matrix gradient back onto one image gradient.
    pub(crate) fn col2im_add<T: Real>(&self, dcols: &[T], dimg: &mut [T]) {
        let plane = self.height * self.width;
        let kk = self.kernel * self.kernel;
        let n = self.out_pixels();
        for c in 0..self.channels {
            let dst = &mut dimg[c * plane..(c + 1) * plane];
            for k in 0..kk {
                let row = &dcols[(c * kk + k) * n..(c * kk + k + 1) * n];
                let m = &self.map[k * n..(k + 1) * n];
                for (&g, &idx) in row.iter().zip(m) {
                    if idx != OUTSIDE {
                        dst[idx as usize] += g;
                    }
                }
            }
        }
    }
}

pub(crate) fn check_conv_shapes<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<(usize, usize)> {
    let (xs, ws) = (x.shape(), w.shape());
    if xs.len() != 4 || ws.len() != 4 || ws[2] != ws[3] {
        return Err(Error::invalid(format!("conv2d expects [N,C,H,W] x [O,C,K,K], got {xs:?} x {ws:?}")));
    }
    if xs[1] != ws[1] {
        return Err(Error::invalid(format!("conv2d channel mismatch: input {} vs weight {}", xs[1], ws[1])));
    }
    if b.shape() != [ws[0]] {
        return Err(Error::invalid(format!("conv2d bias shape {:?}, expected [{}]", b.shape(), ws[0])));
    }
    Ok((xs[0], ws[0]))
}

/// Forward pass; also returns the geometry and column buffer for reuse in
/// the backward pass.
pub fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<(Tensor<T>, ConvGeom, Vec<T>)> {
    let (n, out_c) = check_conv_shapes(x, w, b)?;
    let xs = x.shape();
    let geom = ConvGeom::new(xs[1], xs[2], xs[3], w.shape()[2], stride, padding)?;
    let rows = geom.col_rows();
    let opix = geom.out_pixels();
    let in_len = xs[1] * xs[2] * xs[3];
    let mut cols = vec![T::ZERO; n * rows * opix];
    let mut out = vec![T::ZERO; n * out_c * opix];
    let wm = ArrayView2::from_shape((out_c, rows), w.data()).expect("weight layout");
    for i in 0..n {
        let c = &mut cols[i * rows * opix..(i + 1) * rows * opix];
        geom.im2col(&x.data()[i * in_len..(i + 1) * in_len], c);
        let cm = ArrayView2::from_shape((rows, opix), &*c).expect("cols layout");
        let y = wm.dot(&cm);
        let dst = &mut out[i * out_c * opix..(i + 1) * out_c * opix];
        for (o, row) in y.outer_iter().enumerate() {
            let bias = b.data()[o];
            for (d, &v) in dst[o * opix..(o + 1) * opix].iter_mut().zip(row.iter()) {
                *d = v + bias;
            }
        }
    }
    let t = Tensor::new(&[n, out_c, geom.out_height, geom.out_width], out)?;
    Ok((t, geom, cols))
}
