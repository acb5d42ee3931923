//! RGGB mosaics: bilinear demosaicing and synthetic RAW generation by
//! inverting a simple camera pipeline (sRGB gamma + color correction).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::filter::mirror;
use super::{clamp01, ImageRgb};
use crate::error::{Error, Result};

/// Single-channel sensor image with an RGGB layout:
/// `(even row, even col) = R`, `(odd row, odd col) = B`, the rest `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct BayerRaw {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl BayerRaw {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
            return Err(Error::invalid(format!(
                "bayer dimensions must be even and nonzero, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "bayer of {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::invalid(format!("raw sample {v} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

/// Channel measured at `(x, y)` in an RGGB mosaic.
#[inline]
pub fn site_channel(x: usize, y: usize) -> usize {
    match (y % 2, x % 2) {
        (0, 0) => 0,
        (1, 1) => 2,
        _ => 1,
    }
}

/// Bilinear demosaic: native samples are kept, each missing channel is the
/// mean of same-channel sites in the 3x3 neighborhood. Reflect-101 padding
/// preserves mosaic parity at the borders.
pub fn demosaic_bilinear(raw: &BayerRaw) -> ImageRgb {
    let (w, h) = (raw.width, raw.height);
    let mut data = vec![0.0f32; 3 * w * h];
    let n = w * h;
    for y in 0..h {
        for x in 0..w {
            let native = site_channel(x, y);
            let mut sum = [0.0f32; 3];
            let mut cnt = [0u32; 3];
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let xx = mirror(x as isize + dx, w);
                    let yy = mirror(y as isize + dy, h);
                    let c = site_channel(xx, yy);
                    sum[c] += raw.get(xx, yy);
                    cnt[c] += 1;
                }
            }
            for c in 0..3 {
                let v = if c == native {
                    raw.get(x, y)
                } else {
                    sum[c] / cnt[c] as f32
                };
                data[c * n + y * w + x] = v;
            }
        }
    }
    ImageRgb::from_planar_clamped(w, h, data).expect("dimensions already validated")
}

/// 3x3 color-correction matrix mapping camera-linear RGB to display-linear
/// RGB (`out = M * cam`). Rows must sum to 1 so that gray stays gray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorMatrix(pub [[f32; 3]; 3]);

impl Default for ColorMatrix {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl ColorMatrix {
    pub const IDENTITY: ColorMatrix = ColorMatrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn new(m: [[f32; 3]; 3]) -> Result<Self> {
        for (i, row) in m.iter().enumerate() {
            let s: f32 = row.iter().sum();
            if !row.iter().all(|v| v.is_finite()) || (s - 1.0).abs() > 1e-4 {
                return Err(Error::invalid(format!("color matrix row {i} sums to {s}, expected 1")));
            }
        }
        let cm = ColorMatrix(m);
        if cm.determinant().abs() < 1e-6 {
            return Err(Error::invalid("color matrix is singular"));
        }
        Ok(cm)
    }

    fn determinant(&self) -> f32 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> ColorMatrix {
        let m = &self.0;
        let det = self.determinant();
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        ColorMatrix([
            [cof(1, 2, 1, 2) / det, -cof(0, 2, 1, 2) / det, cof(0, 1, 1, 2) / det],
            [-cof(1, 2, 0, 2) / det, cof(0, 2, 0, 2) / det, -cof(0, 1, 0, 2) / det],
            [cof(1, 2, 0, 1) / det, -cof(0, 2, 0, 1) / det, cof(0, 1, 0, 1) / det],
        ])
    }

    #[inline]
    pub fn apply(&self, v: [f32; 3]) -> [f32; 3] {
        let m = &self.0;
        [0, 1, 2].map(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
    }
}

#[inline]
pub fn srgb_to_linear(v: f32) -> f32 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
pub fn linear_to_srgb(v: f32) -> f32 {
    let v = v.max(0.0);
    if v <= 0.003_130_8 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// Parameters of the pipeline inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RawSynthesis {
    pub ccm: ColorMatrix,
    pub noise_sigma: f32,
}

impl RawSynthesis {
    /// Linearize, undo color correction, mosaic, add Gaussian read noise.
    pub fn synthesize(&self, img: &ImageRgb, seed: u64) -> Result<BayerRaw> {
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::invalid(format!("noise sigma {} must be >= 0", self.noise_sigma)));
        }
        // Odd sizes lose their last row/column so the mosaic tiles evenly.
        let w = img.width() & !1;
        let h = img.height() & !1;
        if w == 0 || h == 0 {
            return Err(Error::invalid("image too small to mosaic"));
        }
        let inv = self.ccm.inverse();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = if self.noise_sigma > 0.0 {
            Some(Normal::new(0.0f32, self.noise_sigma).expect("sigma validated"))
        } else {
            None
        };
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let lin = img.pixel(x, y).map(srgb_to_linear);
                let cam = inv.apply(lin);
                let mut v = cam[site_channel(x, y)];
                if let Some(n) = &noise {
                    v += n.sample(&mut rng);
                }
                data.push(clamp01(v));
            }
        }
        BayerRaw::new(w, h, data)
    }

    /// Forward pipeline applied to a demosaiced camera-linear image.
    pub fn forward(&self, linear: &ImageRgb) -> ImageRgb {
        forward_correct(linear, &self.ccm)
    }
}

/// Pipeline inversion with the identity color matrix.
pub fn rgb_to_raw(img: &ImageRgb, noise_sigma: f32, seed: u64) -> Result<BayerRaw> {
    RawSynthesis {
        ccm: ColorMatrix::IDENTITY,
        noise_sigma,
    }
    .synthesize(img, seed)
}

/// Color correction followed by sRGB encoding.
pub fn forward_correct(linear: &ImageRgb, ccm: &ColorMatrix) -> ImageRgb {
    linear.map_pixels(|p| ccm.apply(p).map(|v| linear_to_srgb(clamp01(v))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_dimensions_rejected() {
        assert!(BayerRaw::new(3, 2, vec![0.0; 6]).is_err());
        assert!(BayerRaw::new(2, 2, vec![0.0; 4]).is_ok());
    }

    #[test]
    fn constant_raw_demosaics_to_constant() {
        let raw = BayerRaw::new(8, 6, vec![0.37; 48]).unwrap();
        let img = demosaic_bilinear(&raw);
        assert!(img.data().iter().all(|&v| (v - 0.37).abs() < 1e-7));
    }

    #[test]
    fn native_red_site_preserved() {
        let raw = BayerRaw::new(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let img = demosaic_bilinear(&raw);
        assert_eq!(img.get(0, 0, 0), 1.0);
    }

    #[test]
    fn gray_half_linearizes() {
        let img = ImageRgb::gray(4, 4, 0.5);
        let raw = rgb_to_raw(&img, 0.0, 0).unwrap();
        let expected = ((0.5f32 + 0.055) / 1.055).powf(2.4);
        assert!((expected - 0.2140).abs() < 1e-4);
        assert!(raw.data().iter().all(|&v| (v - expected).abs() < 1e-6));
    }

    #[test]
    fn negative_sigma_rejected() {
        assert!(rgb_to_raw(&ImageRgb::gray(4, 4, 0.5), -0.1, 0).is_err());
    }

    #[test]
    fn color_matrix_inverse_round_trips() {
        let m = ColorMatrix::new([[1.2, -0.1, -0.1], [-0.2, 1.4, -0.2], [0.0, -0.3, 1.3]]).unwrap();
        let v = [0.3, 0.5, 0.7];
        let back = m.inverse().apply(m.apply(v));
        for i in 0..3 {
            assert!((back[i] - v[i]).abs() < 1e-5);
        }
        assert!(ColorMatrix::new([[1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
    }

    #[test]
    fn srgb_curves_invert() {
        for i in 0..=100 {
            let v = i as f32 / 100.0;
            assert!((linear_to_srgb(srgb_to_linear(v)) - v).abs() < 1e-5);
        }
    }
}
