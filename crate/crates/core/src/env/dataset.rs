//! In-memory samples and the on-disk dataset manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{load_image, load_raw, BayerRaw, ImageRgb};
use crate::metrics::{load_depth, DepthMap, DetectionSet};

/// One ground-truth image with optional side data.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub name: String,
    pub clean: ImageRgb,
    /// Pre-degraded start image, used by [`super::StartConfig::Given`].
    pub input: Option<ImageRgb>,
    pub raw: Option<BayerRaw>,
    pub detections: Option<DetectionSet>,
    pub depth: Option<DepthMap>,
}

impl Sample {
    pub fn new(name: impl Into<String>, clean: ImageRgb) -> Self {
        Self {
            name: name.into(),
            clean,
            input: None,
            raw: None,
            detections: None,
            depth: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub split: Split,
    pub clean: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_VERSION: u32 = 1;

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        Self {
            version: MANIFEST_VERSION,
            entries,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::from(e).at_path(path))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Unsupported(format!("dataset manifest version {}", m.version)).at_path(path));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::from(e).at_path(path))
    }

    /// Loads every entry of `split` (all entries when `None`), in manifest order.
    pub fn load_samples(&self, root: impl AsRef<Path>, split: Option<Split>) -> Result<Vec<Sample>> {
        let root = root.as_ref();
        let mut out = Vec::new();
        for e in self.entries.iter().filter(|e| split.is_none_or(|s| s == e.split)) {
            let mut s = Sample::new(e.name.clone(), load_image(root.join(&e.clean))?);
            if let Some(p) = &e.input {
                s.input = Some(load_image(root.join(p))?);
            }
            if let Some(p) = &e.raw {
                s.raw = Some(load_raw(root.join(p))?);
            }
            if let Some(p) = &e.detections {
                let path = root.join(p);
                let text = fs::read_to_string(&path).map_err(|err| Error::from(err).at_path(&path))?;
                let d: DetectionSet = serde_json::from_str(&text).map_err(|err| Error::from(err).at_path(&path))?;
                d.validate(s.clean.width(), s.clean.height()).map_err(|err| err.at_path(&path))?;
                s.detections = Some(d);
            }
            if let Some(p) = &e.depth {
                let d = load_depth(root.join(p))?;
                if (d.width(), d.height()) != s.clean.dims() {
                    return Err(Error::invalid("depth map size differs from its image").at_path(root.join(p)));
                }
                s.depth = Some(d);
            }
            out.push(s);
        }
        Ok(out)
    }
}
