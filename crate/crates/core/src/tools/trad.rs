//! Classic pixel and neighborhood operators.

use crate::image::filter::{gaussian_kernel_1d, mirror, per_channel, separable};
use crate::image::{ImageRgb, Plane};

pub const BRIGHTNESS_OFFSETS: [f32; 12] = [
    -0.30, -0.25, -0.20, -0.15, -0.10, -0.05, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30,
];
pub const GAMMAS: [f32; 6] = [0.5, 2.0 / 3.0, 0.8, 1.25, 1.5, 2.0];
pub const HUE_SHIFTS: [f32; 6] = [-20.0, -10.0, -5.0, 5.0, 10.0, 20.0];
pub const SATURATION_FACTORS: [f32; 6] = [0.7, 0.85, 0.95, 1.05, 1.2, 1.4];

pub const GAUSSIAN_SIZE: usize = 5;
pub const GAUSSIAN_SIGMA: f64 = 1.0;
pub const BILATERAL_SIZE: usize = 5;
pub const BILATERAL_SIGMA_SPACE: f32 = 2.0;
pub const BILATERAL_SIGMA_RANGE: f32 = 0.1;
pub const SHARPEN_AMOUNT: f32 = 0.5;

pub fn apply_brightness(img: &ImageRgb, offset: f32) -> ImageRgb {
    img.map(|v| v + offset)
}

pub fn apply_gamma(img: &ImageRgb, gamma: f32) -> ImageRgb {
    img.map(|v| v.powf(gamma))
}

/// RGB in `[0,1]` to `(h in [0,360), s, v)`.
pub fn rgb_to_hsv([r, g, b]: [f32; 3]) -> [f32; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d <= 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    let s = if max <= 0.0 { 0.0 } else { d / max };
    [h, s, max]
}

pub fn hsv_to_rgb([h, s, v]: [f32; 3]) -> [f32; 3] {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

pub fn hue_shift(img: &ImageRgb, degrees: f32) -> ImageRgb {
    img.map_pixels(|p| {
        let [h, s, v] = rgb_to_hsv(p);
        if s == 0.0 {
            return p;
        }
        hsv_to_rgb([(h + degrees).rem_euclid(360.0), s, v])
    })
}

pub fn saturation_scale(img: &ImageRgb, factor: f32) -> ImageRgb {
    img.map_pixels(|p| {
        let [h, s, v] = rgb_to_hsv(p);
        if s == 0.0 {
            return p;
        }
        hsv_to_rgb([h, (s * factor).clamp(0.0, 1.0), v])
    })
}

/// Gray-world white balance: each channel is scaled toward the mean of
/// the channel means. Channels with mean below `1e-4` are left alone.
pub fn grayworld_wb(img: &ImageRgb) -> ImageRgb {
    let means = img.channel_means();
    let gray = means.iter().sum::<f64>() / 3.0;
    let gains = means.map(|m| if m < 1e-4 { 1.0 } else { (gray / m) as f32 });
    img.map_pixels(|p| [p[0] * gains[0], p[1] * gains[1], p[2] * gains[2]])
}

pub fn gaussian_filter(img: &ImageRgb) -> ImageRgb {
    let k = gaussian_kernel_1d(GAUSSIAN_SIZE, GAUSSIAN_SIGMA);
    per_channel(img, |p| separable(p, &k))
}

pub fn box_filter(img: &ImageRgb) -> ImageRgb {
    let k = [1.0f32 / 3.0; 3];
    per_channel(img, |p| separable(p, &k))
}

/// 5x5 bilateral filter; the range kernel uses the Euclidean RGB distance.
pub fn bilateral_filter(img: &ImageRgb) -> ImageRgb {
    let (w, h) = img.dims();
    let r = (BILATERAL_SIZE / 2) as isize;
    let two_ss = 2.0 * BILATERAL_SIGMA_SPACE * BILATERAL_SIGMA_SPACE;
    let two_sr = 2.0 * BILATERAL_SIGMA_RANGE * BILATERAL_SIGMA_RANGE;
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let c = img.pixel(x, y);
            let mut acc = [0.0f32; 3];
            let mut wsum = 0.0f32;
            for dy in -r..=r {
                for dx in -r..=r {
                    let q = img.pixel(mirror(x as isize + dx, w), mirror(y as isize + dy, h));
                    let d2: f32 = (0..3).map(|i| (q[i] - c[i]).powi(2)).sum();
                    let wt = (-((dx * dx + dy * dy) as f32) / two_ss - d2 / two_sr).exp();
                    for i in 0..3 {
                        acc[i] += wt * (q[i] - c[i]);
                    }
                    wsum += wt;
                }
            }
            out.set_pixel(x, y, [0, 1, 2].map(|i| c[i] + acc[i] / wsum));
        }
    }
    out
}

/// Unsharp mask: `img + 0.5 * (img - gaussian(img))`.
pub fn sharpen(img: &ImageRgb) -> ImageRgb {
    let k = gaussian_kernel_1d(GAUSSIAN_SIZE, GAUSSIAN_SIGMA);
    per_channel(img, |p: &Plane| {
        let blur = separable(p, &k);
        Plane::from_fn(p.width(), p.height(), |x, y| {
            let v = p.get(x, y);
            v + SHARPEN_AMOUNT * (v - blur.get(x, y))
        })
    })
}

pub fn stop_tool(img: &ImageRgb) -> ImageRgb {
    img.clone()
}
