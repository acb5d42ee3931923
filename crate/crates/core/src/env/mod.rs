//! The tool-selection environment: episodes start from a degraded image,
//! each step applies one tool and is rewarded by the change of a task
//! metric.

mod dataset;
mod oracle;
mod run;

pub use dataset::{DatasetManifest, ManifestEntry, Sample, Split, MANIFEST_VERSION};
pub use oracle::{
    blob_detector_oracle, high_frequency_residual, noise_coupled_depth_oracle, BlobDetector, DepthEstimator, Detector,
    NoiseCoupledDepth, BLOB_MIN_PIXELS, BLOB_THRESHOLD, DEFAULT_DEPTH_COUPLING,
};
pub use run::{evaluate, evaluate_with, rollout, train, EpisodeRow, EvalReport, TrainConfig, TrainLog, TrainLogEntry};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::image::{demosaic_bilinear, distort, forward_correct, DistortionFamily, DistortionKind, DistortionSpec, ImageRgb, RawSynthesis, Severity};
use crate::metrics::{depth_delta1, depth_rmse, psnr, step_reward, weighted_pr, MetricKind, Requirement, RewardSpec, color_metric, intensity_metric};
use crate::tools::Toolbox;

/// How the first image `I_1` of an episode is produced from a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StartConfig {
    /// Optionally degrade the clean image, invert the camera pipeline to a
    /// Bayer mosaic, then demosaic.
    Raw {
        #[serde(default)]
        synthesis: RawSynthesis,
        /// Apply the CCM and sRGB encoding after demosaicing.
        #[serde(default)]
        forward_correct: bool,
        /// One family is drawn per episode; empty disables augmentation.
        #[serde(default)]
        augment: Vec<DistortionFamily>,
        /// Fixed severity; drawn per episode when absent.
        #[serde(default)]
        severity: Option<Severity>,
    },
    /// Apply one distortion drawn uniformly from the list.
    Distort { choices: Vec<DistortionKind> },
    /// Use the sample's stored input image.
    Given,
}

impl Default for StartConfig {
    fn default() -> Self {
        StartConfig::Raw {
            synthesis: RawSynthesis::default(),
            forward_correct: false,
            augment: Vec::new(),
            severity: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub max_steps: usize,
    pub reward: RewardSpec,
    pub start: StartConfig,
    pub depth_coupling: f32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            max_steps: 8,
            reward: RewardSpec::with_default_scale(MetricKind::Psnr),
            start: StartConfig::default(),
            depth_coupling: DEFAULT_DEPTH_COUPLING,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps must be at least 1"));
        }
        if !(self.depth_coupling.is_finite() && self.depth_coupling >= 0.0) {
            return Err(Error::invalid("depth_coupling must be non-negative"));
        }
        if let StartConfig::Distort { choices } = &self.start {
            if choices.is_empty() {
                return Err(Error::invalid("distort start needs at least one choice"));
            }
            for c in choices {
                c.validate()?;
            }
        }
        self.reward.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: usize,
    pub action: usize,
    pub tool: String,
    pub reward: f64,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub sample: usize,
    pub seed: u64,
    pub initial: ImageRgb,
    pub current: ImageRgb,
    pub metric_initial: f64,
    pub metric_current: f64,
    pub t: usize,
    pub done: bool,
    pub trace: Vec<TraceStep>,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.trace.iter().map(|s| s.reward).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: Vec<f32>,
    pub reward: f64,
    pub done: bool,
}

pub struct Env {
    config: EnvConfig,
    toolbox: Toolbox,
    extractor: FeatureExtractor,
    samples: Vec<Sample>,
    detector: Box<dyn Detector>,
    depth: Box<dyn DepthEstimator>,
}

impl std::fmt::Debug for Env {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Env")
            .field("config", &self.config)
            .field("samples", &self.samples.len())
            .finish_non_exhaustive()
    }
}

impl Env {
    pub fn new(config: EnvConfig, toolbox: Toolbox, extractor: FeatureExtractor, samples: Vec<Sample>) -> Result<Self> {
        config.validate()?;
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let need = config.reward.metric.requirement();
        for s in &samples {
            let (w, h) = s.clean.dims();
            let min = extractor.config().min_side();
            if w < min || h < min {
                return Err(Error::invalid(format!("sample `{}` is smaller than {min}px", s.name)));
            }
            match need {
                Requirement::Detections if s.detections.is_none() => {
                    return Err(Error::invalid(format!("sample `{}` lacks detections for the reward", s.name)));
                }
                Requirement::Depth if s.depth.is_none() => {
                    return Err(Error::invalid(format!("sample `{}` lacks depth for the reward", s.name)));
                }
                _ => {}
            }
            match &config.start {
                StartConfig::Raw { .. } if w % 2 == 1 || h % 2 == 1 => {
                    return Err(Error::invalid(format!("sample `{}` needs even dimensions for RAW synthesis", s.name)));
                }
                StartConfig::Given => {
                    let input = s.input.as_ref().ok_or_else(|| Error::invalid(format!("sample `{}` has no input image", s.name)))?;
                    input.ensure_same_dims(&s.clean)?;
                }
                _ => {}
            }
        }
        Ok(Self {
            toolbox,
            extractor,
            samples,
            detector: Box::new(BlobDetector),
            depth: Box::new(NoiseCoupledDepth {
                coupling: config.depth_coupling,
            }),
            config,
        })
    }

    pub fn with_detector(mut self, detector: Box<dyn Detector>) -> Self {
        self.detector = detector;
        self
    }

    pub fn with_depth_estimator(mut self, depth: Box<dyn DepthEstimator>) -> Self {
        self.depth = depth;
        self
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn toolbox(&self) -> &Toolbox {
        &self.toolbox
    }

    pub fn extractor(&self) -> &FeatureExtractor {
        &self.extractor
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn action_count(&self) -> usize {
        self.toolbox.action_count()
    }

    pub fn features(&self, img: &ImageRgb) -> Result<Vec<f32>> {
        Ok(self.extractor.extract(img)?.into_vec())
    }

    /// `M(img)` for the configured reward metric.
    pub fn metric(&self, img: &ImageRgb, sample: usize, seed: u64) -> Result<f64> {
        let s = &self.samples[sample];
        match &self.config.reward.metric {
            MetricKind::Psnr => psnr(img, &s.clean),
            MetricKind::Color { target } => Ok(color_metric(img, *target)),
            MetricKind::Intensity { target } => Ok(intensity_metric(img, *target)),
            MetricKind::Pr { w_p, w_r, iou_threshold } => {
                let gt = s.detections.as_ref().expect("checked at construction");
                Ok(weighted_pr(&self.detector.detect(img), gt, *w_p, *w_r, *iou_threshold, |_| 1.0))
            }
            MetricKind::Sopr {
                w_p,
                w_r,
                w_so,
                area_threshold,
                iou_threshold,
            } => {
                let gt = s.detections.as_ref().expect("checked at construction");
                let area = area_threshold.unwrap_or(0.01 * img.pixel_count() as f64);
                let so = |g: &crate::metrics::Detection| if g.bbox.area() < area { *w_so } else { 1.0 };
                Ok(weighted_pr(&self.detector.detect(img), gt, *w_p, *w_r, *iou_threshold, so))
            }
            MetricKind::DepthRmse | MetricKind::DepthDelta1 => {
                let gt = s.depth.as_ref().expect("checked at construction");
                let est = self.depth.estimate(img, gt, seed);
                if self.config.reward.metric == MetricKind::DepthRmse {
                    depth_rmse(&est, gt)
                } else {
                    depth_delta1(&est, gt)
                }
            }
        }
    }

    /// Builds `I_1` for `sample`; pure in `(sample, seed)`.
    pub fn start_image(&self, sample: usize, seed: u64) -> Result<ImageRgb> {
        let s = &self.samples[sample];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match &self.config.start {
            StartConfig::Given => Ok(s.input.clone().expect("checked at construction")),
            StartConfig::Distort { choices } => {
                let kind = choices[rng.random_range(0..choices.len())];
                distort(&s.clean, &DistortionSpec::new(kind, Severity::Low, rng.random())?)
            }
            StartConfig::Raw {
                synthesis,
                forward_correct: fwd,
                augment,
                severity,
            } => {
                let mut base = s.clean.clone();
                if !augment.is_empty() {
                    let family = augment[rng.random_range(0..augment.len())];
                    let sev = severity.unwrap_or(if rng.random::<bool>() { Severity::High } else { Severity::Low });
                    base = distort(&base, &DistortionSpec::sample(family, sev, rng.random()))?;
                }
                let raw = synthesis.synthesize(&base, rng.random())?;
                let linear = demosaic_bilinear(&raw);
                Ok(if *fwd { forward_correct(&linear, &synthesis.ccm) } else { linear })
            }
        }
    }

    /// Starts an episode on a specific sample.
    pub fn reset_sample(&self, sample: usize, seed: u64) -> Result<(Vec<f32>, Episode)> {
        if sample >= self.samples.len() {
            return Err(Error::invalid(format!("sample {sample} outside 0..{}", self.samples.len())));
        }
        let initial = self.start_image(sample, seed)?;
        let metric = self.metric(&initial, sample, seed)?;
        let state = self.features(&initial)?;
        Ok((
            state,
            Episode {
                sample,
                seed,
                current: initial.clone(),
                initial,
                metric_initial: metric,
                metric_current: metric,
                t: 0,
                done: false,
                trace: Vec::new(),
            },
        ))
    }

    /// Starts an episode on a sample drawn from `seed`.
    pub fn reset(&self, seed: u64) -> Result<(Vec<f32>, Episode)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sample = rng.random_range(0..self.samples.len());
        self.reset_sample(sample, rng.random())
    }

    pub fn step(&self, ep: &mut Episode, action: usize) -> Result<StepOutcome> {
        if ep.done {
            return Err(Error::EpisodeFinished);
        }
        let (_, spec) = self.toolbox.registry().tool_for_action(action)?;
        let tool = spec.name.clone();
        let stop = self.toolbox.is_stop(action);
        let (metric, reward) = if stop {
            (ep.metric_current, 0.0)
        } else {
            ep.current = self.toolbox.apply(action, &ep.current)?;
            let m = self.metric(&ep.current, ep.sample, ep.seed)?;
            (m, step_reward(ep.metric_current, m, &self.config.reward))
        };
        if !reward.is_finite() {
            return Err(Error::invalid(format!("non-finite reward after `{tool}`")));
        }
        ep.metric_current = metric;
        ep.t += 1;
        ep.done = stop || ep.t >= self.config.max_steps;
        ep.trace.push(TraceStep {
            t: ep.t,
            action,
            tool,
            reward,
            metric,
        });
        Ok(StepOutcome {
            state: self.features(&ep.current)?,
            reward,
            done: ep.done,
        })
    }
}
