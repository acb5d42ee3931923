//! Procedural scenes: a smooth dark background with bright objects whose
//! pixel bounds are known, so detection ground truth comes for free.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ImageRgb;
use crate::metrics::BoxXywh;

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: ImageRgb,
    pub objects: Vec<BoxXywh>,
}

pub fn synthetic_scene(width: usize, height: usize, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: [f32; 3] = [0; 3].map(|_| rng.random_range(0.1..0.3));
    let (gx, gy) = (rng.random_range(-0.1f32..0.1), rng.random_range(-0.1f32..0.1));
    let phase = rng.random_range(0.0f32..6.3);
    let mut data = vec![0f32; 3 * width * height];
    let plane = width * height;
    for y in 0..height {
        for x in 0..width {
            let (u, v) = (x as f32 / width as f32, y as f32 / height as f32);
            let ripple = 0.03 * (6.0 * u + 4.0 * v + phase).sin();
            for c in 0..3 {
                data[c * plane + y * width + x] = base[c] + gx * u + gy * v + ripple;
            }
        }
    }
    let count = rng.random_range(1..=3);
    let mut objects = Vec::with_capacity(count);
    let max_side = (width.min(height) / 2).max(3);
    for _ in 0..count {
        let w = rng.random_range(3..=max_side).min(width);
        let h = rng.random_range(3..=max_side).min(height);
        let x0 = rng.random_range(0..=width - w);
        let y0 = rng.random_range(0..=height - h);
        let color: [f32; 3] = [0; 3].map(|_| rng.random_range(0.6..0.95));
        let ellipse = rng.random::<bool>();
        let (cx, cy) = (x0 as f32 + w as f32 / 2.0, y0 as f32 + h as f32 / 2.0);
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                if ellipse {
                    let dx = (x as f32 + 0.5 - cx) / (w as f32 / 2.0);
                    let dy = (y as f32 + 0.5 - cy) / (h as f32 / 2.0);
                    if dx * dx + dy * dy > 1.0 {
                        continue;
                    }
                }
                for c in 0..3 {
                    data[c * plane + y * width + x] = color[c];
                }
            }
        }
        objects.push(BoxXywh {
            x: x0 as f64,
            y: y0 as f64,
            w: w as f64,
            h: h as f64,
        });
    }
    Scene {
        image: ImageRgb::from_planar_clamped(width, height, data).expect("sized buffer"),
        objects,
    }
}
