//! Task metrics `M(I)` and the difference-of-metric step reward.
//!
//! Every metric is oriented so that larger is better except the depth
//! RMSE, whose reward spec conventionally carries a negative scale.

mod depth;
mod detection;
mod quality;

pub use depth::{depth_delta1, depth_rmse, load_depth, save_depth, DepthMap};
pub use detection::{
    iou, pr_metric, precision_recall, sopr_metric, weighted_pr, BoxXywh, Detection, DetectionSet,
    DEFAULT_IOU_THRESHOLD,
};
pub use quality::{color_metric, intensity_metric, mse, psnr, ssim, PSNR_CAP_DB};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Metric selection plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MetricKind {
    Psnr,
    Color {
        target: [f32; 3],
    },
    Intensity {
        target: f32,
    },
    Pr {
        #[serde(default = "half")]
        w_p: f64,
        #[serde(default = "half")]
        w_r: f64,
        #[serde(default = "default_iou")]
        iou_threshold: f64,
    },
    Sopr {
        #[serde(default = "half")]
        w_p: f64,
        #[serde(default = "half")]
        w_r: f64,
        #[serde(default = "default_wso")]
        w_so: f64,
        /// Boxes with area below this many pixels count as small. `None`
        /// means 1% of the image area.
        #[serde(default)]
        area_threshold: Option<f64>,
        #[serde(default = "default_iou")]
        iou_threshold: f64,
    },
    DepthRmse,
    DepthDelta1,
}

fn half() -> f64 {
    0.5
}
fn default_iou() -> f64 {
    DEFAULT_IOU_THRESHOLD
}
fn default_wso() -> f64 {
    2.0
}

/// What ground truth a metric consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Requirement {
    None,
    ReferenceImage,
    Detections,
    Depth,
}

impl MetricKind {
    pub fn pr_default() -> Self {
        MetricKind::Pr {
            w_p: 0.5,
            w_r: 0.5,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
        }
    }

    pub fn sopr_default() -> Self {
        MetricKind::Sopr {
            w_p: 0.5,
            w_r: 0.5,
            w_so: 2.0,
            area_threshold: None,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Psnr => "psnr",
            MetricKind::Color { .. } => "color",
            MetricKind::Intensity { .. } => "intensity",
            MetricKind::Pr { .. } => "pr",
            MetricKind::Sopr { .. } => "sopr",
            MetricKind::DepthRmse => "depth-rmse",
            MetricKind::DepthDelta1 => "depth-delta1",
        }
    }

    pub fn requirement(&self) -> Requirement {
        match self {
            MetricKind::Psnr => Requirement::ReferenceImage,
            MetricKind::Color { .. } | MetricKind::Intensity { .. } => Requirement::None,
            MetricKind::Pr { .. } | MetricKind::Sopr { .. } => Requirement::Detections,
            MetricKind::DepthRmse | MetricKind::DepthDelta1 => Requirement::Depth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in01 = |v: f32| (0.0..=1.0).contains(&v);
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let iou_ok = |v: f64| v > 0.0 && v < 1.0;
        let ok = match self {
            MetricKind::Color { target } => target.iter().all(|&v| in01(v)),
            MetricKind::Intensity { target } => in01(*target),
            MetricKind::Pr { w_p, w_r, iou_threshold } => nonneg(*w_p) && nonneg(*w_r) && iou_ok(*iou_threshold),
            MetricKind::Sopr {
                w_p,
                w_r,
                w_so,
                area_threshold,
                iou_threshold,
            } => {
                nonneg(*w_p)
                    && nonneg(*w_r)
                    && nonneg(*w_so)
                    && area_threshold.is_none_or(nonneg)
                    && iou_ok(*iou_threshold)
            }
            MetricKind::Psnr | MetricKind::DepthRmse | MetricKind::DepthDelta1 => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid metric parameters: {self:?}")))
        }
    }
}

/// Reward `r = scale * (M(I_t) - M(I_{t-1}))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub metric: MetricKind,
    pub scale: f64,
}

impl RewardSpec {
    pub fn new(metric: MetricKind, scale: f64) -> Result<Self> {
        let spec = Self { metric, scale };
        spec.validate()?;
        Ok(spec)
    }

    /// Conventional scale for each metric: 0.1 per dB for PSNR, -1 for RMSE,
    /// 1 otherwise.
    pub fn with_default_scale(metric: MetricKind) -> Self {
        let scale = match metric {
            MetricKind::Psnr => 0.1,
            MetricKind::DepthRmse => -1.0,
            _ => 1.0,
        };
        Self { metric, scale }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.scale.is_finite() || self.scale == 0.0 {
            return Err(Error::invalid(format!("reward scale {} must be finite and nonzero", self.scale)));
        }
        self.metric.validate()
    }
}

pub fn step_reward(m_prev: f64, m_cur: f64, spec: &RewardSpec) -> f64 {
    spec.scale * (m_cur - m_prev)
}
