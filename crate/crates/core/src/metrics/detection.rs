use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Axis-aligned box, top-left corner plus size, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxXywh {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoxXywh {
    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(flatten)]
    pub bbox: BoxXywh,
    pub cls: u32,
    pub score: f64,
}

impl Detection {
    pub fn new(x: f64, y: f64, w: f64, h: f64, cls: u32, score: f64) -> Self {
        Self {
            bbox: BoxXywh { x, y, w, h },
            cls,
            score,
        }
    }
}

/// Serialized as a bare JSON array of `{x, y, w, h, cls, score}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DetectionSet(pub Vec<Detection>);

impl DetectionSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Detection> {
        self.0.iter()
    }

    /// Checks positive sizes, scores in `[0, 1]` and containment in a
    /// `width x height` image.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        for (i, d) in self.0.iter().enumerate() {
            let b = d.bbox;
            let fin = [b.x, b.y, b.w, b.h, d.score].iter().all(|v| v.is_finite());
            if !fin || b.w <= 0.0 || b.h <= 0.0 {
                return Err(Error::invalid(format!("detection {i}: degenerate box {b:?}")));
            }
            if b.x < 0.0 || b.y < 0.0 || b.x + b.w > width as f64 || b.y + b.h > height as f64 {
                return Err(Error::invalid(format!("detection {i}: box {b:?} outside {width}x{height}")));
            }
            if !(0.0..=1.0).contains(&d.score) {
                return Err(Error::invalid(format!("detection {i}: score {} outside [0, 1]", d.score)));
            }
        }
        Ok(())
    }
}

pub fn iou(a: &BoxXywh, b: &BoxXywh) -> f64 {
    let ix = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let iy = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Greedy matching: predictions in descending score order (ties by input
/// order) each claim the unmatched same-class GT box of highest IoU
/// (ties by lower index), provided IoU reaches the threshold.
fn greedy_true_positives(pred: &DetectionSet, gt: &DetectionSet, iou_threshold: f64) -> usize {
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| pred.0[b].score.total_cmp(&pred.0[a].score));
    let mut taken = vec![false; gt.len()];
    let mut tp = 0;
    for pi in order {
        let p = &pred.0[pi];
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gt.0.iter().enumerate() {
            if taken[gi] || g.cls != p.cls {
                continue;
            }
            let v = iou(&p.bbox, &g.bbox);
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((gi, v));
            }
        }
        if let Some((gi, _)) = best {
            taken[gi] = true;
            tp += 1;
        }
    }
    tp
}

/// Image-level `(precision, recall)`.
pub fn precision_recall(pred: &DetectionSet, gt: &DetectionSet, iou_threshold: f64) -> (f64, f64) {
    match (pred.is_empty(), gt.is_empty()) {
        (true, true) => return (1.0, 1.0),
        (true, false) => return (1.0, 0.0),
        (false, true) => return (0.0, 1.0),
        _ => {}
    }
    let tp = greedy_true_positives(pred, gt, iou_threshold) as f64;
    (tp / pred.len() as f64, tp / gt.len() as f64)
}

/// `sum_k so(k) * (w_p * Pr + w_r * Re)` over the GT objects.
pub fn weighted_pr(
    pred: &DetectionSet,
    gt: &DetectionSet,
    w_p: f64,
    w_r: f64,
    iou_threshold: f64,
    so: impl Fn(&Detection) -> f64,
) -> f64 {
    let (p, r) = precision_recall(pred, gt, iou_threshold);
    let term = w_p * p + w_r * r;
    gt.iter().map(|g| so(g) * term).sum()
}

pub fn pr_metric(pred: &DetectionSet, gt: &DetectionSet, w_p: f64, w_r: f64) -> f64 {
    weighted_pr(pred, gt, w_p, w_r, DEFAULT_IOU_THRESHOLD, |_| 1.0)
}

pub fn sopr_metric(pred: &DetectionSet, gt: &DetectionSet, w_p: f64, w_r: f64, w_so: f64, area_threshold: f64) -> f64 {
    weighted_pr(pred, gt, w_p, w_r, DEFAULT_IOU_THRESHOLD, |g| {
        if g.bbox.area() < area_threshold {
            w_so
        } else {
            1.0
        }
    })
}
