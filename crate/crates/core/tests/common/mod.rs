//! Shared fixtures: brute-force metric oracles and the scaled-down training
//! setups. Also compiled into the CLI acceptance target.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ispforge_core::agent::{Agent, AgentConfig};
use ispforge_core::env::{evaluate, rollout, train, Env, EnvConfig, Sample, StartConfig, TrainConfig};
use ispforge_core::features::{ExtractorConfig, FeatureExtractor, SemanticNet};
use ispforge_core::image::{distort, synthetic_scene, DistortionKind, DistortionSpec, ImageRgb, Severity};
use ispforge_core::metrics::{
    color_metric, depth_delta1, depth_rmse, intensity_metric, pr_metric, precision_recall, psnr, sopr_metric, ssim,
    BoxXywh, DepthMap, Detection, DetectionSet, MetricKind, RewardSpec,
};
use ispforge_core::nn::{Tape, Tensor, Var};
use ispforge_core::restore::{
    collective_loss, train_collective, train_individual, CollectiveConfig, IndividualConfig, NetBank, NetDepth, NetFamily, NetKey,
    RestoreNet, TrajectorySpec,
};
use ispforge_core::tools::{
    apply_brightness, apply_gamma, bilateral_filter, box_filter, gaussian_filter, grayworld_wb, ToolRegistry, Toolbox,
    BRIGHTNESS_OFFSETS, GAMMAS,
};

// ---- brute-force metric oracles (f64 throughout, no library helpers) ----

pub fn bf_psnr(a: &ImageRgb, b: &ImageRgb) -> f64 {
    let n = a.data().len() as f64;
    let mut s = 0.0;
    for i in 0..a.data().len() {
        let d = a.data()[i] as f64 - b.data()[i] as f64;
        s += d * d;
    }
    if s == 0.0 {
        return 100.0;
    }
    (-10.0 * (s / n).log10()).min(100.0)
}

fn bf_gray(img: &ImageRgb, x: usize, y: usize) -> f64 {
    let [r, g, b] = img.pixel(x, y);
    // the library computes luma in f32 and clamps; mirror both
    let v = 0.299f32 * r + 0.587f32 * g + 0.114f32 * b;
    v.clamp(0.0, 1.0) as f64
}

/// Direct 2-D windowed sums, every full 11x11 window.
pub fn bf_ssim(a: &ImageRgb, b: &ImageRgb) -> f64 {
    let (w, h) = a.dims();
    let mut k2 = [[0.0f64; 11]; 11];
    let mut ks = 0.0;
    for (i, row) in k2.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            ks += *v;
        }
    }
    let (c1, c2) = (1e-4, 9e-4);
    let mut total = 0.0;
    let mut count = 0.0;
    for oy in 0..=h - 11 {
        for ox in 0..=w - 11 {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let k = k2[i][j] / ks;
                    let p = bf_gray(a, ox + j, oy + i);
                    let q = bf_gray(b, ox + j, oy + i);
                    mx += k * p;
                    my += k * q;
                    sxx += k * p * p;
                    syy += k * q * q;
                    sxy += k * p * q;
                }
            }
            let (vx, vy, cxy) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1.0;
        }
    }
    total / count
}

pub fn bf_color(img: &ImageRgb, target: [f32; 3]) -> f64 {
    let (w, h) = img.dims();
    let mut s = 0.0;
    for y in 0..h {
        for x in 0..w {
            let p = img.pixel(x, y);
            for c in 0..3 {
                s += (p[c] as f64 - target[c] as f64).abs();
            }
        }
    }
    -s / (w * h) as f64
}

pub fn bf_intensity(img: &ImageRgb, target: f32) -> f64 {
    let (w, h) = img.dims();
    let mut s = 0.0;
    for y in 0..h {
        for x in 0..w {
            s += (bf_gray(img, x, y) - target as f64).abs();
        }
    }
    -s / (w * h) as f64
}

fn bf_iou(a: &BoxXywh, b: &BoxXywh) -> f64 {
    let (ax1, ay1, ax2, ay2) = (a.x, a.y, a.x + a.w, a.y + a.h);
    let (bx1, by1, bx2, by2) = (b.x, b.y, b.x + b.w, b.y + b.h);
    let iw = if ax2 < bx2 { ax2 } else { bx2 } - if ax1 > bx1 { ax1 } else { bx1 };
    let ih = if ay2 < by2 { ay2 } else { by2 } - if ay1 > by1 { ay1 } else { by1 };
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    inter / (a.w * a.h + b.w * b.h - inter)
}

/// Greedy matching written as repeated selection of the highest-scoring
/// unprocessed prediction.
pub fn bf_precision_recall(pred: &DetectionSet, gt: &DetectionSet, thr: f64) -> (f64, f64) {
    let (np, ng) = (pred.0.len(), gt.0.len());
    if np == 0 {
        return (1.0, if ng == 0 { 1.0 } else { 0.0 });
    }
    if ng == 0 {
        return (0.0, 1.0);
    }
    let mut done = vec![false; np];
    let mut taken = vec![false; ng];
    let mut tp = 0usize;
    for _ in 0..np {
        let mut pick = usize::MAX;
        for i in 0..np {
            if !done[i] && (pick == usize::MAX || pred.0[i].score > pred.0[pick].score) {
                pick = i;
            }
        }
        done[pick] = true;
        let p = &pred.0[pick];
        let mut best = usize::MAX;
        let mut best_iou = -1.0;
        for j in 0..ng {
            if taken[j] || gt.0[j].cls != p.cls {
                continue;
            }
            let v = bf_iou(&p.bbox, &gt.0[j].bbox);
            if v >= thr && v > best_iou {
                best = j;
                best_iou = v;
            }
        }
        if best != usize::MAX {
            taken[best] = true;
            tp += 1;
        }
    }
    (tp as f64 / np as f64, tp as f64 / ng as f64)
}

pub fn bf_sopr(pred: &DetectionSet, gt: &DetectionSet, w_p: f64, w_r: f64, w_so: f64, area: f64) -> f64 {
    let (p, r) = bf_precision_recall(pred, gt, 0.5);
    let mut s = 0.0;
    for g in &gt.0 {
        let weight = if g.bbox.w * g.bbox.h < area { w_so } else { 1.0 };
        s += weight * (w_p * p + w_r * r);
    }
    s
}

fn bf_depth_pairs(d: &DepthMap, gt: &DepthMap) -> Vec<(f64, f64)> {
    let mut v = Vec::new();
    for i in 0..d.values().len() {
        let (a, b) = (d.values()[i], gt.values()[i]);
        if a.is_finite() && a > 0.0 && b.is_finite() && b > 0.0 {
            v.push((a as f64, b as f64));
        }
    }
    v
}

pub fn bf_rmse(d: &DepthMap, gt: &DepthMap) -> f64 {
    let p = bf_depth_pairs(d, gt);
    let s: f64 = p.iter().map(|(a, b)| (a - b).powi(2)).sum();
    (s / p.len() as f64).sqrt()
}

pub fn bf_delta1(d: &DepthMap, gt: &DepthMap) -> f64 {
    let p = bf_depth_pairs(d, gt);
    let hits = p.iter().filter(|(a, b)| a / b < 1.25 && b / a < 1.25).count();
    hits as f64 / p.len() as f64
}

// ---- random inputs ----

pub fn random_image(w: usize, h: usize, rng: &mut impl Rng) -> ImageRgb {
    ImageRgb::from_fn(w, h, |_, _, _| rng.random())
}

/// A random image plus a mildly perturbed copy, so metrics land mid-range.
pub fn random_pair(rng: &mut impl Rng) -> (ImageRgb, ImageRgb) {
    let (w, h) = (rng.random_range(11..24), rng.random_range(11..24));
    let a = random_image(w, h, rng);
    let amp: f32 = rng.random_range(0.0..0.3);
    let (w, h) = a.dims();
    let b = ImageRgb::from_fn(w, h, |x, y, c| (a.get(c, x, y) + amp * (rng.random::<f32>() - 0.5)).clamp(0.0, 1.0));
    (a, b)
}

pub fn random_detections(n: usize, classes: u32, rng: &mut impl Rng) -> DetectionSet {
    DetectionSet(
        (0..n)
            .map(|_| {
                let (w, h) = (rng.random_range(1.0..12.0), rng.random_range(1.0..12.0));
                Detection::new(
                    rng.random_range(0.0..20.0),
                    rng.random_range(0.0..20.0),
                    w,
                    h,
                    rng.random_range(0..classes),
                    rng.random(),
                )
            })
            .collect(),
    )
}

/// Predictions near the GT boxes, plus strays.
pub fn jittered(gt: &DetectionSet, rng: &mut impl Rng) -> DetectionSet {
    let mut out = Vec::new();
    for g in &gt.0 {
        if rng.random::<f64>() >= 0.8 {
            continue;
        }
        let b = &g.bbox;
        let (dx, dy): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let w = (b.w + rng.random_range(-1.0..1.0)).max(0.5);
        out.push(Detection::new(b.x + dx, b.y + dy, w, b.h, g.cls, rng.random()));
    }
    out.extend(random_detections(rng.random_range(0..3), 2, rng).0);
    DetectionSet(out)
}

pub fn random_depth(w: usize, h: usize, rng: &mut impl Rng) -> DepthMap {
    DepthMap::from_fn(w, h, |_, _| if rng.random::<f64>() < 0.1 { 0.0 } else { rng.random_range(0.5..10.0) })
}

/// Worst absolute gap between each metric and its oracle over `n` inputs.
pub fn metric_oracle_gaps(n: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaps = vec![
        ("psnr", 0.0f64),
        ("ssim", 0.0),
        ("color", 0.0),
        ("intensity", 0.0),
        ("pr", 0.0),
        ("sopr", 0.0),
        ("rmse", 0.0),
        ("delta1", 0.0),
    ];
    let mut bump = |k: usize, a: f64, b: f64| gaps[k].1 = gaps[k].1.max((a - b).abs());
    for _ in 0..n {
        let (a, b) = random_pair(&mut rng);
        bump(0, psnr(&b, &a).unwrap(), bf_psnr(&b, &a));
        bump(1, ssim(&b, &a).unwrap(), bf_ssim(&b, &a));
        let target = [rng.random(), rng.random(), rng.random()];
        bump(2, color_metric(&b, target), bf_color(&b, target));
        let level = rng.random();
        bump(3, intensity_metric(&b, level), bf_intensity(&b, level));
        let gt = random_detections(rng.random_range(0..6), 2, &mut rng);
        let pred = jittered(&gt, &mut rng);
        let (w_p, w_r) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let (p, r) = precision_recall(&pred, &gt, 0.5);
        let (bp, br) = bf_precision_recall(&pred, &gt, 0.5);
        bump(4, (p - bp).abs().max((r - br).abs()), 0.0);
        bump(4, pr_metric(&pred, &gt, w_p, w_r), bf_sopr(&pred, &gt, w_p, w_r, 1.0, 0.0));
        let (w_so, area) = (rng.random_range(1.0..4.0), rng.random_range(1.0..60.0));
        bump(5, sopr_metric(&pred, &gt, w_p, w_r, w_so, area), bf_sopr(&pred, &gt, w_p, w_r, w_so, area));
        let (dw, dh) = (rng.random_range(2..16), rng.random_range(2..16));
        let gt_d = random_depth(dw, dh, &mut rng);
        let est = DepthMap::from_fn(dw, dh, |x, y| {
            let v = gt_d.values()[y * dw + x];
            if rng.random::<f64>() < 0.05 {
                0.0
            } else {
                v * rng.random_range(0.6..1.6) + 0.01
            }
        });
        if let (Ok(r), Ok(d)) = (depth_rmse(&est, &gt_d), depth_delta1(&est, &gt_d)) {
            bump(6, r, bf_rmse(&est, &gt_d));
            bump(7, d, bf_delta1(&est, &gt_d));
        }
    }
    gaps
}

// ---- environments ----

pub fn scenes(n: usize, w: usize, h: usize, seed: u64) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let s = synthetic_scene(w, h, seed.wrapping_mul(7919).wrapping_add(i as u64));
            let mut sample = Sample::new(format!("s{i}"), s.image);
            sample.detections = Some(DetectionSet(
                s.objects.iter().map(|b| Detection::new(b.x, b.y, b.w, b.h, 0, 1.0)).collect(),
            ));
            sample.depth = Some(DepthMap::from_fn(w, h, |x, y| 2.0 + (x + 2 * y) as f32 * 0.1));
            sample
        })
        .collect()
}

/// Smooth textured images used by the brightness bandit.
pub fn bandit_images(seed: u64, n: usize) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (a, b, c): (f32, f32, f32) = (rng.random(), rng.random(), rng.random());
            Sample::new(
                format!("b{i}"),
                ImageRgb::from_fn(16, 16, |x, y, ch| {
                    0.5 + 0.12 * ((x as f32 * (0.2 + 0.5 * a) + y as f32 * (0.2 + 0.5 * b) + ch as f32 * 2.0 + c * 6.0).sin())
                }),
            )
        })
        .collect()
}

pub fn bandit_env(samples: Vec<Sample>) -> Env {
    let choices = BRIGHTNESS_OFFSETS
        .iter()
        .map(|&o| DistortionKind::BrightnessJitter { offset: -o })
        .collect();
    let cfg = EnvConfig {
        max_steps: 2,
        start: StartConfig::Distort { choices },
        ..Default::default()
    };
    let tb = Toolbox::traditional(ToolRegistry::brightness_only()).unwrap();
    Env::new(cfg, tb, FeatureExtractor::new(ExtractorConfig::default()).unwrap(), samples).unwrap()
}

/// Exhaustive best improvement over all tool sequences of length <= 2.
pub fn exhaustive_gain(env: &Env, sample: usize, seed: u64) -> f64 {
    let (_, ep) = env.reset_sample(sample, seed).unwrap();
    let clean = &env.samples()[sample].clean;
    let n = env.action_count();
    let mut best = ep.metric_initial;
    for a in 0..n {
        let i1 = env.toolbox().apply(a, &ep.initial).unwrap();
        best = best.max(psnr(&i1, clean).unwrap());
        for b in 0..n {
            let i2 = env.toolbox().apply(b, &i1).unwrap();
            best = best.max(psnr(&i2, clean).unwrap());
        }
    }
    best - ep.metric_initial
}

pub struct BanditResult {
    pub agent_gain: f64,
    pub oracle_gain: f64,
}

impl BanditResult {
    pub fn ratio(&self) -> f64 {
        self.agent_gain / self.oracle_gain
    }
}

pub fn brightness_bandit(kappa: f64, steps: usize) -> BanditResult {
    let env = bandit_env(bandit_images(1, 200));
    let test = bandit_env(bandit_images(2, 100));
    let cfg = AgentConfig {
        kappa,
        ..AgentConfig::default()
    };
    let mut agent = Agent::new(cfg, env.extractor().feature_len(), env.action_count()).unwrap();
    let tc = TrainConfig {
        steps,
        warmup: 1000,
        log_every: 1000,
    };
    train(&env, &mut agent, &tc, 5).unwrap();
    let (report, eps) = evaluate(&test, &agent, 9, 4).unwrap();
    let oracle = eps.iter().map(|e| exhaustive_gain(&test, e.sample, e.seed)).sum::<f64>() / eps.len() as f64;
    BanditResult {
        agent_gain: report.mean_final - report.mean_initial,
        oracle_gain: oracle,
    }
}

/// Every reward metric the environment supports, with 16x16 scenes.
pub fn telescoping_envs() -> Vec<Env> {
    let metrics = [
        MetricKind::Psnr,
        MetricKind::Color { target: [0.5, 0.45, 0.4] },
        MetricKind::Intensity { target: 0.5 },
        MetricKind::pr_default(),
        MetricKind::sopr_default(),
        MetricKind::DepthRmse,
        MetricKind::DepthDelta1,
    ];
    metrics
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            let start = if i % 2 == 0 {
                StartConfig::default()
            } else {
                StartConfig::Distort {
                    choices: vec![
                        DistortionKind::GaussianNoise { sigma: 0.03 },
                        DistortionKind::GaussianBlur { sigma: 1.0 },
                        DistortionKind::BrightnessJitter { offset: -0.15 },
                    ],
                }
            };
            let cfg = EnvConfig {
                reward: RewardSpec::with_default_scale(m),
                start,
                ..Default::default()
            };
            let tb = Toolbox::traditional(ToolRegistry::traditional_only()).unwrap();
            Env::new(cfg, tb, FeatureExtractor::new(ExtractorConfig::default()).unwrap(), scenes(6, 16, 16, i as u64)).unwrap()
        })
        .collect()
}

/// Largest `|sum r - r_s (M_final - M_initial)|` over `n` random rollouts.
pub fn telescoping_gap(n: usize, seed: u64) -> f64 {
    let envs = telescoping_envs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for k in 0..n {
        let env = &envs[k % envs.len()];
        let (state, mut ep) = env.reset(rng.random()).unwrap();
        let stop_p: f64 = rng.random_range(0.0..0.3);
        let stop = env.toolbox().registry().stop_action();
        let count = env.action_count();
        let mut policy = |_: &[f32]| -> ispforge_core::Result<usize> {
            Ok(if rng.random::<f64>() < stop_p { stop } else { rng.random_range(0..count) })
        };
        rollout(env, state, &mut ep, &mut policy).unwrap();
        let expect = env.config().reward.scale * (ep.metric_current - ep.metric_initial);
        worst = worst.max((ep.total_reward() - expect).abs());
    }
    worst
}

// ---- restoration training ----

/// Held-out PSNR gain of a 3-layer denoiser trained on sigma = 0.05 noise.
pub fn denoise_gain() -> f64 {
    let train: Vec<_> = (0..200).map(|i| synthetic_scene(16, 16, i).image).collect();
    let val: Vec<_> = (1000..1100).map(|i| synthetic_scene(16, 16, i).image).collect();
    let sem = SemanticNet::new(&ExtractorConfig::default());
    let noise = DistortionKind::GaussianNoise { sigma: 0.05 };
    let mut net = RestoreNet::new(NetFamily::Denoise, Severity::High, NetDepth::Shallow, 1);
    let cfg = IndividualConfig {
        distortion: Some(noise),
        val_every: 0,
        ..Default::default()
    };
    train_individual(&mut net, &train, &[], &sem, &cfg).unwrap();
    let mut gain = 0.0;
    for (i, v) in val.iter().enumerate() {
        let d = distort(v, &DistortionSpec::new(noise, Severity::High, 77 + i as u64).unwrap()).unwrap();
        gain += psnr(&net.apply(&d), v).unwrap() - psnr(&d, v).unwrap();
    }
    gain / val.len() as f64
}

pub const DENOISE: NetKey = (NetFamily::Denoise, Severity::Low);
pub const DEBLUR: NetKey = (NetFamily::Deblur, Severity::Low);

/// Mean L1 of `denoise(deblur(I_3))` against the clean image on held-out
/// noise-then-blur chains.
pub fn chain_l1(bank: &NetBank, val: &[ImageRgb]) -> f64 {
    let mut s = 0.0;
    for (i, v) in val.iter().enumerate() {
        let st = TrajectorySpec::sample(&[DENOISE, DEBLUR], 999 + i as u64).stages(v).unwrap();
        let out = bank.get(DENOISE).unwrap().apply(&bank.get(DEBLUR).unwrap().apply(&st[2]));
        s += out.data().iter().zip(v.data()).map(|(a, b)| (a - b).abs() as f64).sum::<f64>() / v.data().len() as f64;
    }
    s / val.len() as f64
}

/// Paired comparison from a shared pretrained start: `(individual, collective)`
/// held-out chain L1 after an equal number of further steps.
pub fn collective_vs_individual(seed: u64) -> (f64, f64) {
    let sem = SemanticNet::new(&ExtractorConfig::default());
    let train: Vec<_> = (0..200).map(|i| synthetic_scene(24, 24, seed * 10000 + i).image).collect();
    let val: Vec<_> = (0..60).map(|i| synthetic_scene(16, 16, seed * 10000 + 5000 + i).image).collect();
    let mut bank = NetBank::new();
    bank.insert(RestoreNet::new(DENOISE.0, DENOISE.1, NetDepth::Shallow, seed));
    bank.insert(RestoreNet::new(DEBLUR.0, DEBLUR.1, NetDepth::Shallow, seed + 100));
    let pre = IndividualConfig {
        steps: 300,
        seed,
        val_every: 0,
        ..Default::default()
    };
    for k in [DENOISE, DEBLUR] {
        train_individual(bank.get_mut(k).unwrap(), &train, &[], &sem, &pre).unwrap();
    }
    let mut indiv = bank.clone();
    let more = IndividualConfig {
        steps: 200,
        seed: seed + 7,
        val_every: 0,
        ..Default::default()
    };
    for k in [DENOISE, DEBLUR] {
        train_individual(indiv.get_mut(k).unwrap(), &train, &[], &sem, &more).unwrap();
    }
    let mut coll = bank;
    let cc = CollectiveConfig {
        t: 3,
        steps: 200,
        seed: seed + 7,
        chain: Some(vec![DENOISE, DEBLUR]),
        batch_size: 16,
        lr: 1e-3,
        ..Default::default()
    };
    train_collective(&mut coll, &train, &cc).unwrap();
    (chain_l1(&indiv, &val), chain_l1(&coll, &val))
}

// ---- maximum entropy ----

/// Policy entropy after training on an all-zero-reward environment, with
/// `log |A|` alongside. Episodes last one step: with longer horizons STOP
/// forfeits the future entropy bonus and the soft-optimal policy avoids it.
pub fn zero_reward_entropy(kappa: f64, steps: usize, hidden: usize) -> (f64, f64) {
    // constant images under constant-preserving tools keep PSNR pinned at the cap
    let samples: Vec<Sample> = (0..8).map(|i| Sample::new(format!("z{i}"), ImageRgb::gray(16, 16, 0.5))).collect();
    let cfg = EnvConfig {
        max_steps: 1,
        reward: RewardSpec::with_default_scale(MetricKind::Psnr),
        start: StartConfig::Given,
        ..Default::default()
    };
    let samples: Vec<Sample> = samples
        .into_iter()
        .map(|mut s| {
            s.input = Some(s.clean.clone());
            s
        })
        .collect();
    let reg = ToolRegistry::full().with_enabled(|t| {
        matches!(
            t.op,
            ispforge_core::tools::ToolOp::GaussianFilter
                | ispforge_core::tools::ToolOp::BoxFilter
                | ispforge_core::tools::ToolOp::BilateralFilter
                | ispforge_core::tools::ToolOp::GrayworldWb
        )
    });
    let env = Env::new(cfg, Toolbox::traditional(reg).unwrap(), FeatureExtractor::new(ExtractorConfig::default()).unwrap(), samples)
        .unwrap();
    let agent_cfg = AgentConfig {
        kappa,
        hidden,
        ..AgentConfig::default()
    };
    let mut agent = Agent::new(agent_cfg, env.extractor().feature_len(), env.action_count()).unwrap();
    train(
        &env,
        &mut agent,
        &TrainConfig {
            steps,
            warmup: 200,
            log_every: 0,
        },
        3,
    )
    .unwrap();
    let (state, _) = env.reset(0).unwrap();
    let p = agent.probabilities(&state).unwrap();
    let h = -p.iter().map(|&v| v as f64 * (v as f64).ln()).sum::<f64>();
    (h, (env.action_count() as f64).ln())
}

// ---- tool algebra ----

/// Worst deviations over `n` random images: `(inverse pairs, constant
/// smoothing, grayworld idempotence)`. Brightness uses images kept clear of
/// the clamp for the largest offset.
pub fn tool_algebra_gaps(n: usize, seed: u64) -> (f32, f32, f32) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut inv, mut cst, mut gw) = (0.0f32, 0.0f32, 0.0f32);
    for _ in 0..n {
        let (w, h) = (rng.random_range(8..24), rng.random_range(8..24));
        let img = random_image(w, h, &mut rng);
        let o = BRIGHTNESS_OFFSETS[rng.random_range(0..BRIGHTNESS_OFFSETS.len())];
        let mid = ImageRgb::new(w, h, img.data().iter().map(|v| 0.31 + 0.38 * v).collect()).unwrap();
        inv = inv.max(apply_brightness(&apply_brightness(&mid, o), -o).max_abs_diff(&mid));
        let k = rng.random_range(0..GAMMAS.len());
        let back = apply_gamma(&apply_gamma(&img, GAMMAS[k]), GAMMAS[GAMMAS.len() - 1 - k]);
        inv = inv.max(back.max_abs_diff(&img));
        let v: f32 = rng.random();
        let flat = ImageRgb::filled(w, h, [v, 1.0 - v, 0.5 * v]);
        for f in [gaussian_filter, box_filter, bilateral_filter] {
            cst = cst.max(f(&flat).max_abs_diff(&flat));
        }
        let once = grayworld_wb(&mid);
        gw = gw.max(grayworld_wb(&once).max_abs_diff(&once));
    }
    (inv, cst, gw)
}

// ---- collective loss ----

pub fn stack(images: &[ImageRgb]) -> Tensor<f32> {
    let (w, h) = images[0].dims();
    let data = images.iter().flat_map(|i| i.data().iter().copied()).collect();
    Tensor::new(&[images.len(), 3, h, w], data).unwrap()
}

/// A bank whose nets are far from identity.
pub fn perturbed_bank(keys: &[NetKey], seed: u64) -> NetBank {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bank = NetBank::new();
    for (i, &(f, s)) in keys.iter().enumerate() {
        let mut net = RestoreNet::new(f, s, NetDepth::Shallow, seed + i as u64);
        for p in net.params_mut().iter_mut() {
            for v in p.value.data_mut() {
                *v += rng.random_range(-0.05..0.05);
            }
        }
        bank.insert(net);
    }
    bank
}

pub fn stages(n: usize, seed: u64) -> Vec<Tensor<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| stack(&(0..2).map(|_| random_image(8, 8, &mut rng)).collect::<Vec<_>>()))
        .collect()
}

pub fn apply_on_tape(tape: &mut Tape<f32>, bank: &NetBank, k: NetKey, x: Var) -> Var {
    let net = bank.get(k).unwrap();
    let vars = net.params().bind_frozen(tape);
    net.forward_on_tape(tape, &vars, x).unwrap()
}

/// Absolute gaps `(T=2 vs single-step L1 over several eps, eps=0 vs local sum)`.
pub fn degeneracy_gaps(seed: u64) -> (f64, f64) {
    let keys = [DENOISE, DEBLUR, (NetFamily::Exposure, Severity::High)];
    let bank = perturbed_bank(&keys, seed);
    let st = stages(2, seed + 1);
    let mut tape = Tape::new();
    let x = tape.constant(st[1].clone());
    let y = tape.constant(st[0].clone());
    let out = apply_on_tape(&mut tape, &bank, keys[0], x);
    let l = tape.l1_loss(out, y).unwrap();
    let single = tape.value(l).item();
    let mut two = 0.0f32;
    for eps in [0.0, 0.1, 0.5, 0.9, 1.0] {
        two = two.max((collective_loss(&bank, &keys[..1], &st, eps).unwrap() - single).abs());
    }
    let mut zero = 0.0f32;
    for t in 3..=4 {
        let chain = &keys[..t - 1];
        let st = stages(t, seed + 10 + t as u64);
        let mut tape = Tape::new();
        let v: Vec<Var> = st.iter().map(|s| tape.constant(s.clone())).collect();
        let mut local = 0.0f32;
        for (i, &k) in chain.iter().enumerate() {
            let o = apply_on_tape(&mut tape, &bank, k, v[i + 1]);
            let l = tape.l1_loss(o, v[i]).unwrap();
            local += tape.value(l).item();
        }
        zero = zero.max((collective_loss(&bank, chain, &st, 0.0).unwrap() - local).abs());
    }
    (two as f64, zero as f64)
}
