//! State encoding: multi-scale intensity and gradient histograms plus a
//! frozen random convolutional embedding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::filter::mirror;
use crate::image::{ImageRgb, Plane};
use crate::nn::{conv2d_forward, kaiming_uniform, ParamSet, Padding, Tape, Tensor, Var};

/// Which feature spaces enter the state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Branches {
    pub intensity: bool,
    pub gradient: bool,
    pub semantic: bool,
}

impl Default for Branches {
    fn default() -> Self {
        Self {
            intensity: true,
            gradient: true,
            semantic: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorConfig {
    /// Grid sizes, coarse to fine; each `g` splits the image into `g x g` cells.
    pub grids: Vec<usize>,
    pub bins: usize,
    pub seed: u64,
    /// Output channels of the stride-2 semantic convolutions.
    pub semantic_channels: Vec<usize>,
    /// The last semantic feature map is average-pooled over a `p x p` grid.
    pub semantic_pool: usize,
    pub branches: Branches,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            grids: vec![1, 2, 4],
            bins: 32,
            seed: 0x015f_096e,
            semantic_channels: vec![8, 16, 32],
            semantic_pool: 2,
            branches: Branches::default(),
        }
    }
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grids.is_empty() || self.grids.contains(&0) || self.bins == 0 {
            return Err(Error::invalid("extractor grids and bins must be positive"));
        }
        if self.semantic_channels.is_empty() || self.semantic_channels.contains(&0) || self.semantic_pool == 0 {
            return Err(Error::invalid("semantic branch needs at least one layer and a positive pool"));
        }
        let b = self.branches;
        if !(b.intensity || b.gradient || b.semantic) {
            return Err(Error::invalid("at least one feature branch must be enabled"));
        }
        Ok(())
    }

    pub fn histogram_len(&self) -> usize {
        self.grids.iter().map(|g| g * g).sum::<usize>() * self.bins
    }

    pub fn semantic_len(&self) -> usize {
        self.semantic_channels.last().copied().unwrap_or(0) * self.semantic_pool * self.semantic_pool
    }

    pub fn feature_len(&self) -> usize {
        let b = self.branches;
        let h = self.histogram_len();
        h * (b.intensity as usize + b.gradient as usize) + if b.semantic { self.semantic_len() } else { 0 }
    }

    pub fn min_side(&self) -> usize {
        self.grids.iter().copied().max().unwrap_or(1)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex_digest(&json)
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `[f_i, f_g, f_s]` with recorded segment lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    data: Vec<f32>,
    intensity_len: usize,
    gradient_len: usize,
}

impl FeatureVector {
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn intensity(&self) -> &[f32] {
        &self.data[..self.intensity_len]
    }

    pub fn gradient(&self) -> &[f32] {
        &self.data[self.intensity_len..self.intensity_len + self.gradient_len]
    }

    pub fn semantic(&self) -> &[f32] {
        &self.data[self.intensity_len + self.gradient_len..]
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }
}

pub fn to_gray(img: &ImageRgb) -> Plane {
    img.luminance()
}

const SOBEL_NORM: f32 = 4.0 * std::f32::consts::SQRT_2;

/// Sobel gradient magnitude divided by `4 * sqrt(2)` and clamped to `[0, 1]`.
pub fn sobel_magnitude(gray: &Plane) -> Plane {
    let (w, h) = (gray.width(), gray.height());
    let at = |x: isize, y: isize| gray.get(mirror(x, w), mirror(y, h));
    Plane::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
        let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        ((gx * gx + gy * gy).sqrt() / SOBEL_NORM).clamp(0.0, 1.0)
    })
}

/// Normalized per-cell histograms over nested grids, coarse to fine,
/// cells row-major.
pub fn multiscale_histogram(channel: &Plane, grids: &[usize], bins: usize) -> Vec<f32> {
    let (w, h) = (channel.width(), channel.height());
    let mut out = Vec::with_capacity(grids.iter().map(|g| g * g).sum::<usize>() * bins);
    for &g in grids {
        for cy in 0..g {
            let (y0, y1) = (cy * h / g, (cy + 1) * h / g);
            for cx in 0..g {
                let (x0, x1) = (cx * w / g, (cx + 1) * w / g);
                let mut hist = vec![0u32; bins];
                for y in y0..y1 {
                    for x in x0..x1 {
                        let b = ((channel.get(x, y) * bins as f32) as usize).min(bins - 1);
                        hist[b] += 1;
                    }
                }
                let n = ((x1 - x0) * (y1 - y0)).max(1) as f32;
                out.extend(hist.into_iter().map(|c| c as f32 / n));
            }
        }
    }
    out
}

/// Frozen, randomly initialized stride-2 convolution stack.
#[derive(Debug, Clone)]
pub struct SemanticNet {
    params: ParamSet<f32>,
    pool: usize,
}

impl SemanticNet {
    pub fn new(config: &ExtractorConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let mut c_in = 3;
        for (i, &c_out) in config.semantic_channels.iter().enumerate() {
            let w = kaiming_uniform(&[c_out, c_in, 3, 3], c_in * 9, &mut rng);
            params.add(format!("conv{i}.weight"), w).expect("unique names");
            params.add(format!("conv{i}.bias"), Tensor::zeros(&[c_out])).expect("unique names");
            c_in = c_out;
        }
        Self {
            params,
            pool: config.semantic_pool,
        }
    }

    pub fn layers(&self) -> usize {
        self.params.len() / 2
    }

    /// Final feature map `[1, C, h, w]` without a tape.
    pub fn feature_map(&self, img: &ImageRgb) -> Tensor<f32> {
        let (w, h) = img.dims();
        let mut x = Tensor::new(&[1, 3, h, w], img.data().to_vec()).expect("planar layout");
        for l in 0..self.layers() {
            let (y, _, _) = conv2d_forward(&x, self.params.value(2 * l), self.params.value(2 * l + 1), 2, Padding::Mirror)
                .expect("semantic conv shapes");
            x = y.map(|v| v.max(0.0));
        }
        x
    }

    /// Records the stack on a tape with frozen weights; `x` is `[N, 3, H, W]`.
    pub fn feature_map_on_tape(&self, tape: &mut Tape<f32>, x: Var) -> crate::Result<Var> {
        let vars = self.params.bind_frozen(tape);
        let mut cur = x;
        for l in 0..self.layers() {
            let y = tape.conv2d(cur, vars[2 * l], vars[2 * l + 1], 2, Padding::Mirror)?;
            cur = tape.relu(y);
        }
        Ok(cur)
    }

    /// Average-pools the final map over a `pool x pool` grid, channel-major.
    pub fn embed(&self, img: &ImageRgb) -> Vec<f32> {
        let fm = self.feature_map(img);
        let s = fm.shape();
        let (c, h, w) = (s[1], s[2], s[3]);
        let p = self.pool;
        let mut out = Vec::with_capacity(c * p * p);
        for ch in 0..c {
            let plane = &fm.data()[ch * h * w..(ch + 1) * h * w];
            for py in 0..p {
                let (y0, y1) = pool_cell(py, p, h);
                for px in 0..p {
                    let (x0, x1) = pool_cell(px, p, w);
                    let mut s = 0.0f32;
                    for y in y0..y1 {
                        s += plane[y * w + x0..y * w + x1].iter().sum::<f32>();
                    }
                    out.push(s / ((y1 - y0) * (x1 - x0)) as f32);
                }
            }
        }
        out
    }
}

/// Cell `i` of `p` along an axis of length `n`; never empty, so maps smaller
/// than the pool grid reuse edge pixels.
fn pool_cell(i: usize, p: usize, n: usize) -> (usize, usize) {
    let a = (i * n / p).min(n - 1);
    let b = ((i + 1) * n / p).clamp(a + 1, n);
    (a, b)
}

/// Extractor with its semantic weights materialized once.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    config: ExtractorConfig,
    semantic: SemanticNet,
}

impl FeatureExtractor {
    pub fn new(config: ExtractorConfig) -> Result<Self> {
        config.validate()?;
        let semantic = SemanticNet::new(&config);
        Ok(Self { config, semantic })
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.config
    }

    pub fn semantic(&self) -> &SemanticNet {
        &self.semantic
    }

    pub fn feature_len(&self) -> usize {
        self.config.feature_len()
    }

    pub fn extract(&self, img: &ImageRgb) -> Result<FeatureVector> {
        let min = self.config.min_side();
        if img.width() < min || img.height() < min {
            return Err(Error::invalid(format!(
                "image {}x{} smaller than the finest {min}x{min} histogram grid",
                img.width(),
                img.height()
            )));
        }
        let b = self.config.branches;
        let gray = to_gray(img);
        let mut data = Vec::with_capacity(self.config.feature_len());
        if b.intensity {
            data.extend(multiscale_histogram(&gray, &self.config.grids, self.config.bins));
        }
        let intensity_len = data.len();
        if b.gradient {
            data.extend(multiscale_histogram(&sobel_magnitude(&gray), &self.config.grids, self.config.bins));
        }
        let gradient_len = data.len() - intensity_len;
        if b.semantic {
            data.extend(self.semantic.embed(img));
        }
        Ok(FeatureVector {
            data,
            intensity_len,
            gradient_len,
        })
    }
}

/// Convenience wrapper building the extractor on the fly.
pub fn extract(img: &ImageRgb, config: &ExtractorConfig) -> Result<FeatureVector> {
    FeatureExtractor::new(config.clone())?.extract(img)
}
