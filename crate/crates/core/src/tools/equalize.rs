//! Histogram equalization and CLAHE on the luminance channel. Chroma is
//! carried along by scaling RGB with the luminance ratio.

use crate::image::{ImageRgb, Plane};

pub const HIST_BINS: usize = 256;

#[inline]
fn bin_of(v: f32) -> usize {
    ((v * HIST_BINS as f32) as usize).min(HIST_BINS - 1)
}

/// Replaces luminance `Y` by `f(x, y, Y)`, scaling RGB by `Y'/Y`. Black
/// pixels become neutral gray at the new level.
fn remap_luminance(img: &ImageRgb, luma: &Plane, f: impl Fn(usize, usize, f32) -> f32) -> ImageRgb {
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let l = luma.get(x, y);
            let target = f(x, y, l);
            let p = img.pixel(x, y);
            let q = if l > 1e-6 { p.map(|v| v * target / l) } else { [target; 3] };
            out.set_pixel(x, y, q);
        }
    }
    out
}

/// Inclusive normalized CDF of a histogram.
fn cdf(hist: &[f64; HIST_BINS]) -> [f32; HIST_BINS] {
    let total: f64 = hist.iter().sum();
    let mut out = [0.0f32; HIST_BINS];
    let mut acc = 0.0;
    for (o, h) in out.iter_mut().zip(hist) {
        acc += h;
        *o = if total > 0.0 { (acc / total) as f32 } else { 0.0 };
    }
    out
}

/// Global equalization: `Y' = CDF(bin(Y))` with a 256-bin histogram.
pub fn hist_equalize(img: &ImageRgb) -> ImageRgb {
    let luma = img.luminance();
    let mut hist = [0.0f64; HIST_BINS];
    for &v in luma.data() {
        hist[bin_of(v)] += 1.0;
    }
    let map = cdf(&hist);
    remap_luminance(img, &luma, |_, _, l| map[bin_of(l)])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaheParams {
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Clip limit as a multiple of the mean bin height; `f32::INFINITY`
    /// disables clipping.
    pub clip_factor: f32,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self {
            tiles_x: 8,
            tiles_y: 8,
            clip_factor: 2.0,
        }
    }
}

fn tile_bounds(len: usize, tiles: usize) -> Vec<(usize, usize)> {
    (0..tiles).map(|i| (i * len / tiles, (i + 1) * len / tiles)).collect()
}

/// Locates `p` between tile centers: `(lower tile, upper tile, weight of upper)`.
fn interp_coord(p: f32, centers: &[f32]) -> (usize, usize, f32) {
    let n = centers.len();
    if n == 1 || p <= centers[0] {
        return (0, 0, 0.0);
    }
    if p >= centers[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let i = centers.windows(2).position(|w| p < w[1]).unwrap_or(n - 2);
    let t = (p - centers[i]) / (centers[i + 1] - centers[i]);
    (i, i + 1, t)
}

pub fn clahe(img: &ImageRgb) -> ImageRgb {
    clahe_with(img, ClaheParams::default())
}

pub fn clahe_with(img: &ImageRgb, params: ClaheParams) -> ImageRgb {
    let (w, h) = img.dims();
    let luma = img.luminance();
    let tx = params.tiles_x.clamp(1, w);
    let ty = params.tiles_y.clamp(1, h);
    let xb = tile_bounds(w, tx);
    let yb = tile_bounds(h, ty);

    let mut maps = Vec::with_capacity(tx * ty);
    for &(y0, y1) in &yb {
        for &(x0, x1) in &xb {
            let mut hist = [0.0f64; HIST_BINS];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[bin_of(luma.get(x, y))] += 1.0;
                }
            }
            let count = ((x1 - x0) * (y1 - y0)) as f64;
            if params.clip_factor.is_finite() {
                let limit = params.clip_factor as f64 * count / HIST_BINS as f64;
                let mut excess = 0.0;
                for b in hist.iter_mut() {
                    if *b > limit {
                        excess += *b - limit;
                        *b = limit;
                    }
                }
                let share = excess / HIST_BINS as f64;
                hist.iter_mut().for_each(|b| *b += share);
            }
            maps.push(cdf(&hist));
        }
    }

    let cx: Vec<f32> = xb.iter().map(|&(a, b)| (a + b) as f32 / 2.0 - 0.5).collect();
    let cy: Vec<f32> = yb.iter().map(|&(a, b)| (a + b) as f32 / 2.0 - 0.5).collect();
    remap_luminance(img, &luma, |x, y, l| {
        let bin = bin_of(l);
        let (x0, x1, fx) = interp_coord(x as f32, &cx);
        let (y0, y1, fy) = interp_coord(y as f32, &cy);
        let m = |ix: usize, iy: usize| maps[iy * tx + ix][bin];
        let top = m(x0, y0) * (1.0 - fx) + m(x1, y0) * fx;
        let bot = m(x0, y1) * (1.0 - fx) + m(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_ramp_is_nearly_fixed() {
        // 256 distinct levels, one pixel each, at bin centers
        let img = ImageRgb::from_fn(16, 16, |x, y, _| ((y * 16 + x) as f32 + 0.5) / 256.0);
        let out = hist_equalize(&img);
        assert!(out.max_abs_diff(&img) <= 1.0 / 256.0 + 1e-6);
    }

    #[test]
    fn two_level_maps_to_cdf() {
        let img = ImageRgb::from_fn(8, 8, |x, _, _| if x < 4 { 0.2 } else { 0.8 });
        let out = hist_equalize(&img);
        let lo = out.luminance().get(0, 0);
        let hi = out.luminance().get(7, 0);
        assert!((lo - 0.5).abs() < 1.0 / 256.0, "{lo}");
        assert!((hi - 1.0).abs() < 1.0 / 256.0, "{hi}");
    }

    #[test]
    fn unclipped_single_tile_clahe_matches_he() {
        let img = ImageRgb::from_fn(20, 12, |x, y, c| ((x * 7 + y * 13 + c * 5) % 23) as f32 / 23.0);
        let p = ClaheParams {
            tiles_x: 1,
            tiles_y: 1,
            clip_factor: f32::INFINITY,
        };
        let a = clahe_with(&img, p);
        let b = hist_equalize(&img);
        assert!(a.max_abs_diff(&b) <= 1.0 / 256.0);
    }

    #[test]
    fn interp_coord_edges() {
        let c = [1.5, 5.5, 9.5];
        assert_eq!(interp_coord(0.0, &c), (0, 0, 0.0));
        assert_eq!(interp_coord(10.0, &c), (2, 2, 0.0));
        let (a, b, t) = interp_coord(3.5, &c);
        assert_eq!((a, b), (0, 1));
        assert!((t - 0.5).abs() < 1e-6);
    }
}
