use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ispforge_core::env::{blob_detector_oracle, DatasetManifest, ManifestEntry, Split};
use ispforge_core::image::{
    distort, load_image, rgb_to_raw, save_image, save_raw, synthetic_scene, DistortionSpec, ImageRgb, Severity,
};
use ispforge_core::metrics::{save_depth, BoxXywh, DepthMap, Detection, DetectionSet};

use crate::config::Config;
use crate::error::{CliError, CliResult};

struct Source {
    name: String,
    image: ImageRgb,
    objects: Option<Vec<BoxXywh>>,
}

fn synthetic(cfg: &Config) -> Vec<Source> {
    let d = &cfg.data;
    (0..d.count)
        .map(|i| {
            let scene = synthetic_scene(d.width, d.height, cfg.seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
            Source {
                name: format!("scene_{i:04}"),
                image: scene.image,
                objects: Some(scene.objects),
            }
        })
        .collect()
}

fn from_dir(dir: &Path, cfg: &Config) -> CliResult<Vec<Source>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::config(anyhow::anyhow!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    paths.truncate(cfg.data.count);
    if paths.is_empty() {
        return Err(CliError::config(anyhow::anyhow!("no PNG files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let img = load_image(p)?;
            // even dimensions keep the Bayer tiling intact
            let (w, h) = (img.width() & !1, img.height() & !1);
            let image = ImageRgb::from_fn(w, h, |x, y, c| img.get(c, x, y));
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(Source {
                name,
                image,
                objects: None,
            })
        })
        .collect()
}

/// Depth that grows towards the top of the frame, with objects in front.
fn scene_depth(w: usize, h: usize, objects: &[BoxXywh]) -> DepthMap {
    DepthMap::from_fn(w, h, |x, y| {
        let mut d = 4.0 + 6.0 * (1.0 - y as f32 / h as f32);
        for (k, b) in objects.iter().enumerate() {
            let inside = (x as f64) >= b.x && (x as f64) < b.x + b.w && (y as f64) >= b.y && (y as f64) < b.y + b.h;
            if inside {
                d = d.min(1.5 + k as f32);
            }
        }
        d
    })
}

pub fn gen_data(cfg: &Config, out: &Path) -> CliResult<()> {
    let d = &cfg.data;
    let sources = match &d.source {
        Some(dir) => from_dir(&cfg.resolve(dir), cfg)?,
        None => synthetic(cfg),
    };
    for sub in ["clean", "input", "raw", "detections", "depth"] {
        fs::create_dir_all(out.join(sub))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xda7a);
    let n = sources.len();
    let n_test = ((n as f64) * d.test_fraction).round() as usize;
    let n_val = ((n as f64) * d.val_fraction).round() as usize;
    let mut entries = Vec::with_capacity(n);
    for (i, src) in sources.into_iter().enumerate() {
        let split = if i < n - n_val - n_test {
            Split::Train
        } else if i < n - n_test {
            Split::Val
        } else {
            Split::Test
        };
        let (w, h) = src.image.dims();
        let mut input = src.image.clone();
        if !d.degrade.is_empty() {
            let family = d.degrade[rng.random_range(0..d.degrade.len())];
            let sev = d.severity.unwrap_or(if rng.random::<bool>() { Severity::High } else { Severity::Low });
            input = distort(&input, &DistortionSpec::sample(family, sev, rng.random()))?;
        }
        let raw = rgb_to_raw(&src.image, d.raw_noise, rng.random())?;
        let detections = match &src.objects {
            Some(objs) => DetectionSet(objs.iter().map(|b| Detection::new(b.x, b.y, b.w, b.h, 0, 1.0)).collect()),
            None => blob_detector_oracle(&src.image),
        };
        let depth = scene_depth(w, h, src.objects.as_deref().unwrap_or(&[]));
        let rel = |dir: &str, ext: &str| PathBuf::from(dir).join(format!("{}.{ext}", src.name));
        save_image(&src.image, out.join(rel("clean", "png")))?;
        save_image(&input, out.join(rel("input", "png")))?;
        save_raw(&raw, out.join(rel("raw", "braw")))?;
        fs::write(out.join(rel("detections", "json")), serde_json::to_string(&detections)?)?;
        save_depth(&depth, out.join(rel("depth", "dpth")))?;
        entries.push(ManifestEntry {
            name: src.name.clone(),
            split,
            clean: rel("clean", "png"),
            input: Some(rel("input", "png")),
            raw: Some(rel("raw", "braw")),
            detections: Some(rel("detections", "json")),
            depth: Some(rel("depth", "dpth")),
        });
    }
    DatasetManifest::new(entries).save(out.join("manifest.json"))?;
    log::info!("wrote {n} samples to {}", out.display());
    Ok(())
}
