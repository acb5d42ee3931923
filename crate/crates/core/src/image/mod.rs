//! Image containers and the RAW/RGB plumbing every tool operates on.
//!
//! [`ImageRgb`] stores three planes (R, G, B) of `f32` samples in `[0, 1]`.
//! Every constructor that accepts arbitrary samples either validates them or
//! clamps them, so downstream code can rely on the range invariant.

mod bayer;
mod distort;
pub mod filter;
mod io;
mod synth;

pub use bayer::{demosaic_bilinear, forward_correct, rgb_to_raw, BayerRaw, ColorMatrix, RawSynthesis};
pub use distort::{distort, jpeg_quant_table, jpeg_sim, DistortionFamily, DistortionKind, DistortionSpec, Severity};
pub use synth::{synthetic_scene, Scene};
pub use io::{load_image, load_raw, read_container, save_image, save_raw, write_container, BRAW_MAGIC, DPTH_MAGIC};

use crate::error::{Error, Result};

/// Luma weights shared by every gray conversion in the crate.
pub const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

/// Single-channel floating-point image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("plane dimensions must be nonzero"));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "plane of {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

/// Planar RGB image with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImageRgb {
    /// Builds an image from planar `R..., G..., B...` samples, rejecting
    /// non-finite or out-of-range values.
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::invalid(format!("sample {i} = {v} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    /// Builds an image from planar samples, clamping into `[0, 1]`.
    /// Non-finite samples become 0.
    pub fn from_planar_clamped(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        data.iter_mut().for_each(|v| *v = clamp01(*v));
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let n = width * height;
        let mut data = Vec::with_capacity(3 * n);
        for v in rgb {
            data.extend(std::iter::repeat_n(clamp01(v), n));
        }
        Self { width, height, data }
    }

    pub fn gray(width: usize, height: usize, v: f32) -> Self {
        Self::filled(width, height, [v; 3])
    }

    /// `f(x, y, channel)`; results are clamped.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(3 * width * height);
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    data.push(clamp01(f(x, y, c)));
                }
            }
        }
        Self { width, height, data }
    }

    pub fn from_planes(planes: [Plane; 3]) -> Result<Self> {
        let (w, h) = (planes[0].width, planes[0].height);
        if planes.iter().any(|p| p.width != w || p.height != h) {
            return Err(Error::invalid("planes differ in size"));
        }
        let mut data = Vec::with_capacity(3 * w * h);
        for p in planes {
            data.extend(p.data.into_iter().map(clamp01));
        }
        Ok(Self { width: w, height: h, data })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        [self.get(0, x, y), self.get(1, x, y), self.get(2, x, y)]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let n = self.pixel_count();
        let i = y * self.width + x;
        for (c, v) in rgb.into_iter().enumerate() {
            self.data[c * n + i] = clamp01(v);
        }
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.pixel_count();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_plane(&self, c: usize) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.channel(c).to_vec(),
        }
    }

    pub fn planes(&self) -> [Plane; 3] {
        [self.channel_plane(0), self.channel_plane(1), self.channel_plane(2)]
    }

    /// All samples, planar.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Applies `f` to every sample and clamps the result.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| clamp01(f(v))).collect(),
        }
    }

    /// Applies `f` to every pixel and clamps the result.
    pub fn map_pixels(&self, mut f: impl FnMut([f32; 3]) -> [f32; 3]) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(x, y, f(self.pixel(x, y)));
            }
        }
        out
    }

    /// Gray conversion with [`LUMA`] weights.
    pub fn luminance(&self) -> Plane {
        let n = self.pixel_count();
        let data = (0..n)
            .map(|i| LUMA[0] * self.data[i] + LUMA[1] * self.data[n + i] + LUMA[2] * self.data[2 * n + i])
            .map(clamp01)
            .collect();
        Plane {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn channel_means(&self) -> [f64; 3] {
        let n = self.pixel_count() as f64;
        [0, 1, 2].map(|c| self.channel(c).iter().map(|&v| v as f64).sum::<f64>() / n)
    }

    pub fn ensure_same_dims(&self, other: &ImageRgb) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &ImageRgb) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("image dimensions must be nonzero"));
    }
    if len != 3 * width * height {
        return Err(Error::invalid(format!(
            "image of {width}x{height} needs {} samples, got {len}",
            3 * width * height
        )));
    }
    Ok(())
}

#[inline]
pub fn clamp01(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_samples() {
        assert!(ImageRgb::new(2, 2, vec![0.5; 12]).is_ok());
        assert!(ImageRgb::new(2, 2, vec![1.5; 12]).is_err());
        assert!(ImageRgb::new(2, 2, vec![f32::NAN; 12]).is_err());
        assert!(ImageRgb::new(2, 2, vec![0.5; 11]).is_err());
    }

    #[test]
    fn clamped_constructor_sanitizes() {
        let img = ImageRgb::from_planar_clamped(1, 1, vec![-1.0, 2.0, f32::NAN]).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn luminance_of_pure_red() {
        let img = ImageRgb::filled(3, 3, [1.0, 0.0, 0.0]);
        assert!((img.luminance().get(1, 1) - 0.299).abs() < 1e-7);
    }
}
