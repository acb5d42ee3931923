//! Seeded degradation operators used to build restoration training pairs
//! and to augment episode inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::filter::{gaussian_blur, mirror, resize_bilinear};
use super::{ImageRgb, Plane, LUMA};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Severity {
    Low,
    High,
}

/// A single degradation with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DistortionKind {
    GaussianNoise { sigma: f32 },
    GaussianBlur { sigma: f32 },
    JpegSim { quality: u8 },
    DownUpResize,
    BrightnessJitter { offset: f32 },
    /// Gamma followed by a saturation scale about the luma axis.
    ToneJitter { gamma: f32, saturation: f32 },
    ChannelGain { gains: [f32; 3] },
}

/// Parameter-free distortion family, used for sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistortionFamily {
    GaussianNoise,
    GaussianBlur,
    JpegSim,
    DownUpResize,
    BrightnessJitter,
    ToneJitter,
    ChannelGain,
}

impl DistortionFamily {
    pub const ALL: [DistortionFamily; 7] = [
        DistortionFamily::GaussianNoise,
        DistortionFamily::GaussianBlur,
        DistortionFamily::JpegSim,
        DistortionFamily::DownUpResize,
        DistortionFamily::BrightnessJitter,
        DistortionFamily::ToneJitter,
        DistortionFamily::ChannelGain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistortionFamily::GaussianNoise => "gaussian-noise",
            DistortionFamily::GaussianBlur => "gaussian-blur",
            DistortionFamily::JpegSim => "jpeg-sim",
            DistortionFamily::DownUpResize => "down-up-resize",
            DistortionFamily::BrightnessJitter => "brightness-jitter",
            DistortionFamily::ToneJitter => "tone-jitter",
            DistortionFamily::ChannelGain => "channel-gain",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown distortion kind `{name}`")))
    }
}

impl DistortionKind {
    pub fn family(&self) -> DistortionFamily {
        match self {
            DistortionKind::GaussianNoise { .. } => DistortionFamily::GaussianNoise,
            DistortionKind::GaussianBlur { .. } => DistortionFamily::GaussianBlur,
            DistortionKind::JpegSim { .. } => DistortionFamily::JpegSim,
            DistortionKind::DownUpResize => DistortionFamily::DownUpResize,
            DistortionKind::BrightnessJitter { .. } => DistortionFamily::BrightnessJitter,
            DistortionKind::ToneJitter { .. } => DistortionFamily::ToneJitter,
            DistortionKind::ChannelGain { .. } => DistortionFamily::ChannelGain,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DistortionKind::GaussianNoise { sigma } => (0.0..=0.2).contains(&sigma),
            DistortionKind::GaussianBlur { sigma } => sigma > 0.0 && sigma <= 3.0,
            DistortionKind::JpegSim { quality } => (1..=100).contains(&quality),
            DistortionKind::DownUpResize => true,
            DistortionKind::BrightnessJitter { offset } => offset.abs() <= 0.5,
            DistortionKind::ToneJitter { gamma, saturation } => {
                (0.4..=2.5).contains(&gamma) && (0.4..=1.6).contains(&saturation)
            }
            DistortionKind::ChannelGain { gains } => gains.iter().all(|g| (0.5..=1.5).contains(g)),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("distortion parameters out of range: {self:?}")))
        }
    }
}

/// A fully specified, reproducible distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    #[serde(flatten)]
    pub kind: DistortionKind,
    pub severity: Severity,
    pub seed: u64,
}

impl DistortionSpec {
    pub fn new(kind: DistortionKind, severity: Severity, seed: u64) -> Result<Self> {
        kind.validate()?;
        Ok(Self { kind, severity, seed })
    }

    /// Draws parameters for `family` from its severity band.
    pub fn sample(family: DistortionFamily, severity: Severity, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d157);
        let hi = severity == Severity::High;
        let mut band = |lo: f32, mid: f32, top: f32| {
            if hi {
                rng.random_range(mid..=top)
            } else {
                rng.random_range(lo..=mid)
            }
        };
        let kind = match family {
            DistortionFamily::GaussianNoise => DistortionKind::GaussianNoise {
                sigma: band(0.01, 0.03, 0.08),
            },
            DistortionFamily::GaussianBlur => DistortionKind::GaussianBlur {
                sigma: band(0.5, 1.0, 2.0),
            },
            DistortionFamily::JpegSim => {
                let q = if hi { band(25.0, 25.0, 60.0) } else { band(60.0, 85.0, 85.0) };
                DistortionKind::JpegSim { quality: q.round() as u8 }
            }
            DistortionFamily::DownUpResize => DistortionKind::DownUpResize,
            DistortionFamily::BrightnessJitter => {
                let mag = band(0.05, 0.15, 0.35);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                DistortionKind::BrightnessJitter { offset: sign * mag }
            }
            DistortionFamily::ToneJitter => {
                let spread = if hi { 0.5f32 } else { 0.2 };
                let g = rng.random_range(-spread..=spread);
                let s = rng.random_range(-spread..=spread) * 0.8;
                DistortionKind::ToneJitter {
                    gamma: 2f32.powf(g),
                    saturation: 1.0 + s,
                }
            }
            DistortionFamily::ChannelGain => {
                let spread = if hi { 0.3f32 } else { 0.15 };
                DistortionKind::ChannelGain {
                    gains: [0; 3].map(|_| 1.0 + rng.random_range(-spread..=spread)),
                }
            }
        };
        Self { kind, severity, seed }
    }
}

/// Applies exactly one distortion. Pure given `spec.seed`.
pub fn distort(img: &ImageRgb, spec: &DistortionSpec) -> Result<ImageRgb> {
    spec.kind.validate()?;
    Ok(match spec.kind {
        DistortionKind::GaussianNoise { sigma } => add_noise(img, sigma, spec.seed),
        DistortionKind::GaussianBlur { sigma } => gaussian_blur(img, sigma as f64),
        DistortionKind::JpegSim { quality } => jpeg_sim(img, quality),
        DistortionKind::DownUpResize => down_up_resize(img),
        DistortionKind::BrightnessJitter { offset } => img.map(|v| v + offset),
        DistortionKind::ToneJitter { gamma, saturation } => img.map_pixels(|p| {
            let p = p.map(|v| v.max(0.0).powf(gamma));
            let y = LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2];
            p.map(|v| y + saturation * (v - y))
        }),
        DistortionKind::ChannelGain { gains } => img.map_pixels(|p| [p[0] * gains[0], p[1] * gains[1], p[2] * gains[2]]),
    })
}

fn add_noise(img: &ImageRgb, sigma: f32, seed: u64) -> ImageRgb {
    if sigma == 0.0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, sigma).expect("sigma validated");
    let data: Vec<f32> = img.data().iter().map(|&v| v + normal.sample(&mut rng)).collect();
    ImageRgb::from_planar_clamped(img.width(), img.height(), data).expect("same dimensions")
}

fn down_up_resize(img: &ImageRgb) -> ImageRgb {
    let (w, h) = img.dims();
    let sw = w.div_ceil(2);
    let sh = h.div_ceil(2);
    super::filter::per_channel(img, |p| resize_bilinear(&resize_bilinear(p, sw, sh), w, h))
}

/// IJG-style luminance quantization table.
pub const JPEG_LUMA_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, 12, 12, 14, 19, 26, 58, 60, 55, 14, 13, 16, 24, 40, 57, 69, 56, 14, 17, 22, 29, 51,
    87, 80, 62, 18, 22, 37, 56, 68, 109, 103, 77, 24, 35, 55, 64, 81, 104, 113, 92, 49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Quantization steps for a quality in `1..=100`.
pub fn jpeg_quant_table(quality: u8) -> [f32; 64] {
    let q = quality.clamp(1, 100) as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0.0f32; 64];
    for (o, &t) in out.iter_mut().zip(JPEG_LUMA_TABLE.iter()) {
        *o = ((t as u32 * scale + 50) / 100).clamp(1, 255) as f32;
    }
    out
}

fn dct_matrix() -> [[f32; 8]; 8] {
    let mut m = [[0.0f32; 8]; 8];
    for (k, row) in m.iter_mut().enumerate() {
        let a = if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        for (n, v) in row.iter_mut().enumerate() {
            *v = (a * ((std::f64::consts::PI * (2 * n + 1) as f64 * k as f64) / 16.0).cos()) as f32;
        }
    }
    m
}

/// Blockwise 8x8 DCT quantization per channel, on a 0..255 scale with a
/// 128 level shift. Partial blocks are filled by mirroring.
pub fn jpeg_sim(img: &ImageRgb, quality: u8) -> ImageRgb {
    let table = jpeg_quant_table(quality);
    let c = dct_matrix();
    let [r, g, b] = img.planes();
    let [r, g, b] = [r, g, b].map(|p| jpeg_plane(&p, &table, &c));
    ImageRgb::from_planes([r, g, b]).expect("same dimensions")
}

fn jpeg_plane(p: &Plane, table: &[f32; 64], c: &[[f32; 8]; 8]) -> Plane {
    let (w, h) = (p.width(), p.height());
    let mut out = Plane::filled(w, h, 0.0);
    let mut block = [[0.0f32; 8]; 8];
    let mut tmp = [[0.0f32; 8]; 8];
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            for (y, row) in block.iter_mut().enumerate() {
                for (x, v) in row.iter_mut().enumerate() {
                    let xx = mirror((bx + x) as isize, w);
                    let yy = mirror((by + y) as isize, h);
                    *v = p.get(xx, yy) * 255.0 - 128.0;
                }
            }
            // forward: F = C X C^T
            for u in 0..8 {
                for x in 0..8 {
                    tmp[u][x] = (0..8).map(|y| c[u][y] * block[y][x]).sum();
                }
            }
            for u in 0..8 {
                for v in 0..8 {
                    let f: f32 = (0..8).map(|x| tmp[u][x] * c[v][x]).sum();
                    let q = table[u * 8 + v];
                    block[u][v] = (f / q).round() * q;
                }
            }
            // inverse: X = C^T F C
            for y in 0..8 {
                for v in 0..8 {
                    tmp[y][v] = (0..8).map(|u| c[u][y] * block[u][v]).sum();
                }
            }
            for y in 0..8 {
                for x in 0..8 {
                    if by + y < h && bx + x < w {
                        let s: f32 = (0..8).map(|v| tmp[y][v] * c[v][x]).sum();
                        out.set(bx + x, by + y, (s + 128.0) / 255.0);
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brightness_shift_is_additive() {
        let img = ImageRgb::gray(8, 8, 0.5);
        let spec = DistortionSpec::new(DistortionKind::BrightnessJitter { offset: 0.1 }, Severity::Low, 0).unwrap();
        let out = distort(&img, &spec).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.6).abs() < 1e-6));
    }

    #[test]
    fn blur_preserves_constant() {
        let img = ImageRgb::gray(9, 7, 0.42);
        let spec = DistortionSpec::new(DistortionKind::GaussianBlur { sigma: 1.5 }, Severity::High, 0).unwrap();
        let out = distort(&img, &spec).unwrap();
        assert!(out.max_abs_diff(&img) < 1e-6);
    }

    #[test]
    fn unknown_kind_rejected() {
        assert!(DistortionFamily::from_name("motion-blur").is_err());
        let bad = r#"{"kind":"motion-blur","severity":"low","seed":1}"#;
        assert!(serde_json::from_str::<DistortionSpec>(bad).is_err());
        let good = r#"{"kind":"gaussian-noise","sigma":0.02,"severity":"low","seed":1}"#;
        assert!(serde_json::from_str::<DistortionSpec>(good).is_ok());
    }

    #[test]
    fn out_of_range_parameters_rejected() {
        assert!(DistortionSpec::new(DistortionKind::GaussianNoise { sigma: -0.1 }, Severity::Low, 0).is_err());
        assert!(DistortionSpec::new(DistortionKind::JpegSim { quality: 0 }, Severity::Low, 0).is_err());
    }

    #[test]
    fn sampled_parameters_stay_in_band() {
        for seed in 0..200 {
            let s = DistortionSpec::sample(DistortionFamily::GaussianNoise, Severity::Low, seed);
            match s.kind {
                DistortionKind::GaussianNoise { sigma } => assert!((0.01..=0.03).contains(&sigma)),
                _ => unreachable!(),
            }
            let s = DistortionSpec::sample(DistortionFamily::BrightnessJitter, Severity::High, seed);
            match s.kind {
                DistortionKind::BrightnessJitter { offset } => assert!((0.15..=0.35).contains(&offset.abs())),
                _ => unreachable!(),
            }
            let s = DistortionSpec::sample(DistortionFamily::JpegSim, Severity::High, seed);
            match s.kind {
                DistortionKind::JpegSim { quality } => assert!((25..=60).contains(&quality)),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn quality_100_table_is_all_ones() {
        assert!(jpeg_quant_table(100).iter().all(|&q| q == 1.0));
    }
}
