//! Toy stand-ins for the downstream detection and depth models.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::image::filter::{gaussian_blur, mirror};
use crate::image::ImageRgb;
use crate::metrics::{DepthMap, Detection, DetectionSet};

pub trait Detector: Send + Sync {
    fn detect(&self, img: &ImageRgb) -> DetectionSet;
}

pub trait DepthEstimator: Send + Sync {
    /// Deterministic in `(img, gt, seed)`.
    fn estimate(&self, img: &ImageRgb, gt: &DepthMap, seed: u64) -> DepthMap;
}

/// Bright-blob detector: 3x3 box-smoothed luminance above 0.5, 4-connected
/// components of at least 4 pixels, scored by mean smoothed luminance.
#[derive(Debug, Clone, Copy, Default)]
pub struct BlobDetector;

pub const BLOB_THRESHOLD: f32 = 0.5;
pub const BLOB_MIN_PIXELS: usize = 4;

impl Detector for BlobDetector {
    fn detect(&self, img: &ImageRgb) -> DetectionSet {
        blob_detector_oracle(img)
    }
}

pub fn blob_detector_oracle(img: &ImageRgb) -> DetectionSet {
    let (w, h) = img.dims();
    let lum = img.luminance();
    let mut smooth = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    s += lum.get(mirror(x as isize + dx, w), mirror(y as isize + dy, h));
                }
            }
            smooth[y * w + x] = s / 9.0;
        }
    }
    let mut label = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if label[start] || smooth[start] <= BLOB_THRESHOLD {
            continue;
        }
        label[start] = true;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
        let (mut count, mut sum) = (0usize, 0f64);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            count += 1;
            sum += smooth[i] as f64;
            let mut visit = |j: usize| {
                if !label[j] && smooth[j] > BLOB_THRESHOLD {
                    label[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if count >= BLOB_MIN_PIXELS {
            out.push(Detection::new(
                x0 as f64,
                y0 as f64,
                (x1 - x0 + 1) as f64,
                (y1 - y0 + 1) as f64,
                0,
                sum / count as f64,
            ));
        }
    }
    DetectionSet(out)
}

/// GT depth with multiplicative noise whose std is `coupling` times the
/// image's high-frequency residual `mean |img - gaussian(img)|`.
#[derive(Debug, Clone, Copy)]
pub struct NoiseCoupledDepth {
    pub coupling: f32,
}

pub const DEFAULT_DEPTH_COUPLING: f32 = 5.0;

impl Default for NoiseCoupledDepth {
    fn default() -> Self {
        Self {
            coupling: DEFAULT_DEPTH_COUPLING,
        }
    }
}

impl DepthEstimator for NoiseCoupledDepth {
    fn estimate(&self, img: &ImageRgb, gt: &DepthMap, seed: u64) -> DepthMap {
        noise_coupled_depth_oracle(img, gt, self.coupling, seed)
    }
}

pub fn high_frequency_residual(img: &ImageRgb) -> f32 {
    let blurred = gaussian_blur(img, 1.0);
    let s: f64 = img.data().iter().zip(blurred.data()).map(|(a, b)| (a - b).abs() as f64).sum();
    (s / img.data().len() as f64) as f32
}

pub fn noise_coupled_depth_oracle(img: &ImageRgb, gt: &DepthMap, coupling: f32, seed: u64) -> DepthMap {
    let std = coupling * high_frequency_residual(img);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = gt
        .values()
        .iter()
        .map(|&d| {
            let n: f32 = StandardNormal.sample(&mut rng);
            if d.is_finite() && d > 0.0 {
                (d * (1.0 + std * n)).max(d * 1e-3)
            } else {
                d
            }
        })
        .collect();
    DepthMap::new(gt.width(), gt.height(), values).expect("same layout as gt")
}
