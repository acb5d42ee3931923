use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{read_container, write_container, DPTH_MAGIC};

/// Depth in meters. Entries that are non-finite or `<= 0` are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::invalid(format!(
                "depth map of {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn is_valid(&self, i: usize) -> bool {
        let v = self.values[i];
        v.is_finite() && v > 0.0
    }

    pub fn scaled(&self, s: f32) -> Self {
        Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    fn pairs<'a>(&'a self, gt: &'a DepthMap) -> Result<Vec<(f64, f64)>> {
        if (self.width, self.height) != (gt.width, gt.height) {
            return Err(Error::DimensionMismatch {
                expected: (gt.width, gt.height),
                found: (self.width, self.height),
            });
        }
        let v: Vec<(f64, f64)> = (0..self.values.len())
            .filter(|&i| self.is_valid(i) && gt.is_valid(i))
            .map(|i| (self.values[i] as f64, gt.values[i] as f64))
            .collect();
        if v.is_empty() {
            return Err(Error::invalid("depth maps share no valid pixels"));
        }
        Ok(v)
    }
}

pub fn depth_rmse(d: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let p = d.pairs(gt)?;
    Ok((p.iter().map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64).sqrt())
}

/// Fraction of valid pixels with `max(d/gt, gt/d) < 1.25`.
pub fn depth_delta1(d: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let p = d.pairs(gt)?;
    let hits = p.iter().filter(|(a, b)| (a / b).max(b / a) < 1.25).count();
    Ok(hits as f64 / p.len() as f64)
}

/// Invalid entries are written as 0.
pub fn save_depth(d: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let values: Vec<f32> = (0..d.values.len())
        .map(|i| if d.is_valid(i) { d.values[i] } else { 0.0 })
        .collect();
    std::fs::write(path, write_container(DPTH_MAGIC, d.width, d.height, &values)).map_err(|e| Error::from(e).at_path(path))
}

pub fn load_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).at_path(path))?;
    let (w, h, v) = read_container(&bytes, DPTH_MAGIC).map_err(|e| e.at_path(path))?;
    DepthMap::new(w, h, v)
}
