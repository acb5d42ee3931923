use crate::error::{Error, Result};
use crate::image::{filter::gaussian_kernel_1d, ImageRgb, Plane};

/// PSNR returned for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

pub fn mse(img: &ImageRgb, reference: &ImageRgb) -> Result<f64> {
    img.ensure_same_dims(reference)?;
    let sum: f64 = img
        .data()
        .iter()
        .zip(reference.data())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok(sum / img.data().len() as f64)
}

/// `10 log10(1 / MSE)` over all samples, capped at [`PSNR_CAP_DB`].
pub fn psnr(img: &ImageRgb, reference: &ImageRgb) -> Result<f64> {
    let m = mse(img, reference)?;
    if m <= 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP_DB))
}

/// Mean SSIM over every full 11x11 Gaussian window of the gray images.
pub fn ssim(img: &ImageRgb, reference: &ImageRgb) -> Result<f64> {
    img.ensure_same_dims(reference)?;
    let (w, h) = img.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}")));
    }
    let x = img.luminance();
    let y = reference.luminance();
    let k: Vec<f64> = gaussian_kernel_1d(SSIM_WINDOW, SSIM_SIGMA).iter().map(|&v| v as f64).collect();
    let ksum: f64 = k.iter().sum();
    let k: Vec<f64> = k.into_iter().map(|v| v / ksum).collect();
    let xs: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
    let ys: Vec<f64> = y.data().iter().map(|&v| v as f64).collect();
    let xx: Vec<f64> = xs.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = ys.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = xs.iter().zip(&ys).map(|(a, b)| a * b).collect();

    let mu_x = valid_filter(&xs, w, h, &k);
    let mu_y = valid_filter(&ys, w, h, &k);
    let e_xx = valid_filter(&xx, w, h, &k);
    let e_yy = valid_filter(&yy, w, h, &k);
    let e_xy = valid_filter(&xy, w, h, &k);

    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = e_xx[i] - mx * mx;
            let vy = e_yy[i] - my * my;
            let cxy = e_xy[i] - mx * my;
            ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2)) / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Separable "valid" correlation; output is `(w-k+1) x (h-k+1)`.
fn valid_filter(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let kw = k.len();
    let ow = w - kw + 1;
    let oh = h - kw + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..kw).map(|i| k[i] * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..kw).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Negated mean per-pixel L1 distance to a target color; 0 is the best value.
pub fn color_metric(img: &ImageRgb, target: [f32; 3]) -> f64 {
    let n = img.pixel_count();
    let mut total = 0.0f64;
    for (c, &t) in target.iter().enumerate() {
        total += img.channel(c).iter().map(|&v| (v - t).abs() as f64).sum::<f64>();
    }
    -total / n as f64
}

/// Negated mean absolute deviation of the gray image from a target level.
pub fn intensity_metric(img: &ImageRgb, target: f32) -> f64 {
    let gray: Plane = img.luminance();
    -gray.data().iter().map(|&v| (v - target).abs() as f64).sum::<f64>() / gray.data().len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_examples() {
        let a = ImageRgb::gray(8, 8, 0.5);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        let b = ImageRgb::gray(8, 8, 0.6);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-4);
        assert!(psnr(&a, &ImageRgb::gray(8, 9, 0.5)).is_err());
    }

    #[test]
    fn ssim_constants_closed_form() {
        let a = ImageRgb::gray(16, 16, 0.5);
        let b = ImageRgb::gray(16, 16, 0.6);
        // luma of (v, v, v) is v up to f32 rounding of the weights
        let (mx, my) = (a.luminance().get(0, 0) as f64, b.luminance().get(0, 0) as f64);
        let expected = (2.0 * mx * my + SSIM_C1) / (mx * mx + my * my + SSIM_C1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-9);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(ssim(&ImageRgb::gray(10, 16, 0.5), &ImageRgb::gray(10, 16, 0.5)).is_err());
    }

    #[test]
    fn target_metrics() {
        let img = ImageRgb::filled(8, 8, [0.2, 0.4, 0.6]);
        assert_eq!(color_metric(&img, [0.2, 0.4, 0.6]), 0.0);
        let gray = ImageRgb::gray(8, 8, 0.2);
        assert!((intensity_metric(&gray, 0.5) + 0.3).abs() < 1e-6);
    }
}
