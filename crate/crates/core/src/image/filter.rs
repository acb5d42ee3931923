//! Plane-level convolution helpers. All borders use mirror (reflect-101)
//! padding: index `-1` maps to `1`, index `n` maps to `n - 2`.

use super::{ImageRgb, Plane};

/// Reflect-101 index into `0..n`.
#[inline]
pub fn mirror(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Normalized 1-D Gaussian taps of odd `size`.
pub fn gaussian_kernel_1d(size: usize, sigma: f64) -> Vec<f32> {
    assert!(size % 2 == 1, "kernel size must be odd");
    let r = (size / 2) as isize;
    let w: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| (v / s) as f32).collect()
}

/// Separable correlation with the same 1-D kernel along both axes.
///
/// Accumulates differences from the center sample so that a normalized
/// kernel maps a constant plane to itself bit-exactly.
pub fn separable(plane: &Plane, kernel: &[f32]) -> Plane {
    let (w, h) = (plane.width(), plane.height());
    let r = (kernel.len() / 2) as isize;
    let mut tmp = Plane::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let c = plane.get(x, y);
            let mut acc = 0.0f32;
            for (k, &kv) in kernel.iter().enumerate() {
                let xx = mirror(x as isize + k as isize - r, w);
                acc += kv * (plane.get(xx, y) - c);
            }
            tmp.set(x, y, c + acc);
        }
    }
    let mut out = Plane::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let c = tmp.get(x, y);
            let mut acc = 0.0f32;
            for (k, &kv) in kernel.iter().enumerate() {
                let yy = mirror(y as isize + k as isize - r, h);
                acc += kv * (tmp.get(x, yy) - c);
            }
            out.set(x, y, c + acc);
        }
    }
    out
}

/// Dense 2-D correlation with a square `size x size` kernel (row-major).
pub fn correlate(plane: &Plane, kernel: &[f32], size: usize) -> Plane {
    let (w, h) = (plane.width(), plane.height());
    let r = (size / 2) as isize;
    Plane::from_fn(w, h, |x, y| {
        let mut acc = 0.0f32;
        for ky in 0..size {
            let yy = mirror(y as isize + ky as isize - r, h);
            for kx in 0..size {
                let xx = mirror(x as isize + kx as isize - r, w);
                acc += kernel[ky * size + kx] * plane.get(xx, yy);
            }
        }
        acc
    })
}

/// Applies a plane filter to each channel and clamps.
pub fn per_channel(img: &ImageRgb, f: impl Fn(&Plane) -> Plane) -> ImageRgb {
    let [r, g, b] = img.planes();
    ImageRgb::from_planes([f(&r), f(&g), f(&b)]).expect("filters preserve dimensions")
}

pub fn gaussian_blur(img: &ImageRgb, sigma: f64) -> ImageRgb {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let k = gaussian_kernel_1d(2 * radius + 1, sigma);
    per_channel(img, |p| separable(p, &k))
}

/// Bilinear sample at continuous pixel coordinates (pixel centers at
/// integers), edge-clamped.
#[inline]
pub fn bilinear_sample(plane: &Plane, x: f32, y: f32) -> f32 {
    let (w, h) = (plane.width(), plane.height());
    let x = x.clamp(0.0, (w - 1) as f32);
    let y = y.clamp(0.0, (h - 1) as f32);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f32;
    let fy = y - y0 as f32;
    let top = plane.get(x0, y0) * (1.0 - fx) + plane.get(x1, y0) * fx;
    let bot = plane.get(x0, y1) * (1.0 - fx) + plane.get(x1, y1) * fx;
    top * (1.0 - fy) + bot * fy
}

/// Bilinear resize with half-pixel center alignment.
pub fn resize_bilinear(plane: &Plane, new_w: usize, new_h: usize) -> Plane {
    let sx = plane.width() as f32 / new_w as f32;
    let sy = plane.height() as f32 / new_h as f32;
    Plane::from_fn(new_w, new_h, |x, y| {
        let src_x = (x as f32 + 0.5) * sx - 0.5;
        let src_y = (y as f32 + 0.5) * sy - 0.5;
        bilinear_sample(plane, src_x, src_y)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirror_is_reflect_101() {
        assert_eq!(mirror(-1, 5), 1);
        assert_eq!(mirror(-2, 5), 2);
        assert_eq!(mirror(5, 5), 3);
        assert_eq!(mirror(6, 5), 2);
        assert_eq!(mirror(3, 5), 3);
        assert_eq!(mirror(-7, 1), 0);
        assert_eq!(mirror(9, 3), 1);
    }

    #[test]
    fn gaussian_taps_sum_to_one() {
        let k = gaussian_kernel_1d(5, 1.0);
        assert!((k.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert!(k[2] > k[1] && k[1] > k[0]);
    }

    #[test]
    fn half_downsample_is_box_average() {
        let p = Plane::from_fn(4, 2, |x, y| (x + 4 * y) as f32);
        let d = resize_bilinear(&p, 2, 1);
        assert!((d.get(0, 0) - (0.0 + 1.0 + 4.0 + 5.0) / 4.0).abs() < 1e-6);
        assert!((d.get(1, 0) - (2.0 + 3.0 + 6.0 + 7.0) / 4.0).abs() < 1e-6);
    }
}
