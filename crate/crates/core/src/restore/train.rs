use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{in_severity_band, NetBank, NetKey, RestoreNet};
use crate::error::{Error, Result};
use crate::features::SemanticNet;
use crate::image::{distort, DistortionKind, DistortionSpec, ImageRgb};
use crate::nn::{Adam, AdamConfig, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndividualConfig {
    pub alpha: f32,
    pub beta: f32,
    pub steps: usize,
    pub batch_size: usize,
    pub crop: usize,
    pub lr: f64,
    pub seed: u64,
    /// Validation is evaluated every `val_every` steps (0 disables it).
    pub val_every: usize,
    /// Fixed distortion parameters instead of sampling the severity band.
    pub distortion: Option<DistortionKind>,
}

impl Default for IndividualConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.1,
            steps: 200,
            batch_size: 16,
            crop: 16,
            lr: 1e-3,
            seed: 0,
            val_every: 10,
            distortion: None,
        }
    }
}

impl IndividualConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.beta.is_finite() && self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::invalid("alpha and beta must be finite and non-negative"));
        }
        if self.batch_size == 0 || self.crop < 4 {
            return Err(Error::invalid("batch_size must be positive and crop at least 4"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid("lr must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mini-batch loss after each optimizer step.
    pub train_loss: Vec<f64>,
    /// `(step, mean L1)` on the held-out set; step 0 is before training.
    pub val_l1: Vec<(usize, f64)>,
    /// Held-out L1 of the distorted input itself.
    pub identity_l1: Option<f64>,
}

fn random_crop(img: &ImageRgb, size: usize, rng: &mut impl Rng) -> Result<ImageRgb> {
    let (w, h) = img.dims();
    if w < size || h < size {
        return Err(Error::invalid(format!("image {w}x{h} is smaller than the {size}px crop")));
    }
    let x0 = rng.random_range(0..=w - size);
    let y0 = rng.random_range(0..=h - size);
    Ok(ImageRgb::from_fn(size, size, |x, y, c| img.get(c, x0 + x, y0 + y)))
}

fn stack(images: &[ImageRgb]) -> Tensor<f32> {
    let (w, h) = images[0].dims();
    let data = images.iter().flat_map(|i| i.data().iter().copied()).collect();
    Tensor::new(&[images.len(), 3, h, w], data).expect("uniform crop size")
}

fn distortion_for(net: &RestoreNet, fixed: Option<DistortionKind>, seed: u64) -> Result<DistortionSpec> {
    match fixed {
        None => Ok(DistortionSpec::sample(net.family.distortion(), net.severity, seed)),
        Some(kind) => {
            if kind.family() != net.family.distortion() {
                return Err(Error::invalid(format!(
                    "{} cannot be trained on {} distortions",
                    net.name(),
                    kind.family().name()
                )));
            }
            if !in_severity_band(&kind, net.severity) {
                return Err(Error::invalid(format!("severity band mismatch: {kind:?} for {}", net.name())));
            }
            DistortionSpec::new(kind, net.severity, seed)
        }
    }
}

/// Distorted/clean pairs for one net, drawn deterministically from `seed`.
fn pairs(
    net: &RestoreNet,
    images: &[ImageRgb],
    count: usize,
    crop: usize,
    fixed: Option<DistortionKind>,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<ImageRgb>, Vec<ImageRgb>)> {
    let mut inputs = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    for _ in 0..count {
        let img = &images[rng.random_range(0..images.len())];
        let clean = random_crop(img, crop, rng)?;
        let spec = distortion_for(net, fixed, rng.random())?;
        inputs.push(distort(&clean, &spec)?);
        targets.push(clean);
    }
    Ok((inputs, targets))
}

/// Mean L1 between `net` outputs and targets, one image at a time.
pub fn validation_l1(net: &RestoreNet, inputs: &[ImageRgb], targets: &[ImageRgb]) -> f64 {
    let total: f64 = inputs.iter().zip(targets).map(|(i, t)| mean_abs(&net.apply(i), t)).sum();
    total / inputs.len().max(1) as f64
}

fn mean_abs(a: &ImageRgb, b: &ImageRgb) -> f64 {
    let s: f64 = a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs() as f64).sum();
    s / a.data().len() as f64
}

/// Individual training: `alpha * L1 + beta * L1(feat(out), feat(clean))`
/// where `feat` is the frozen semantic conv stack.
pub fn train_individual(
    net: &mut RestoreNet,
    train: &[ImageRgb],
    val: &[ImageRgb],
    semantic: &SemanticNet,
    cfg: &IndividualConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut val_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7a11_da7a);
    let (val_in, val_tgt) = if val.is_empty() || cfg.val_every == 0 {
        (Vec::new(), Vec::new())
    } else {
        pairs(net, val, val.len(), cfg.crop, cfg.distortion, &mut val_rng)?
    };
    let mut report = TrainReport::default();
    if !val_in.is_empty() {
        report.identity_l1 = Some(val_in.iter().zip(&val_tgt).map(|(a, b)| mean_abs(a, b)).sum::<f64>() / val_in.len() as f64);
        report.val_l1.push((0, validation_l1(net, &val_in, &val_tgt)));
    }

    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), net.params());
    for step in 1..=cfg.steps {
        let (inputs, targets) = pairs(net, train, cfg.batch_size, cfg.crop, cfg.distortion, &mut rng)?;
        let mut tape = Tape::new();
        let vars = net.params().bind(&mut tape);
        let x = tape.constant(stack(&inputs));
        let y = tape.constant(stack(&targets));
        let out = net.forward_on_tape(&mut tape, &vars, x)?;
        let l1 = tape.l1_loss(out, y)?;
        let mut loss = if cfg.alpha == 1.0 { l1 } else { tape.scale(l1, cfg.alpha) };
        if cfg.beta != 0.0 {
            let fo = semantic.feature_map_on_tape(&mut tape, out)?;
            let fy = semantic.feature_map_on_tape(&mut tape, y)?;
            let feat = tape.l1_loss(fo, fy)?;
            let feat = tape.scale(feat, cfg.beta);
            loss = tape.add(loss, feat)?;
        }
        report.train_loss.push(tape.value(loss).item() as f64);
        let grads = tape.backward(loss)?;
        net.params_mut().accumulate_grads(&vars, &grads);
        adam.step(net.params_mut());
        if !val_in.is_empty() && step % cfg.val_every == 0 {
            report.val_l1.push((step, validation_l1(net, &val_in, &val_tgt)));
        }
    }
    log::debug!("{}: final train loss {:?}", net.name(), report.train_loss.last());
    Ok(report)
}

/// One multi-step degradation: `stages[0]` is clean, `stages[t]` is
/// `stages[t-1]` after `distortions[t-1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub chain: Vec<NetKey>,
    pub distortions: Vec<DistortionSpec>,
}

impl TrajectorySpec {
    pub fn sample(chain: &[NetKey], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let distortions = chain
            .iter()
            .map(|&(family, severity)| DistortionSpec::sample(family.distortion(), severity, rng.random()))
            .collect();
        Self {
            chain: chain.to_vec(),
            distortions,
        }
    }

    /// `I_1..I_T` with `I_1 = clean`.
    pub fn stages(&self, clean: &ImageRgb) -> Result<Vec<ImageRgb>> {
        let mut out = vec![clean.clone()];
        for d in &self.distortions {
            let next = distort(out.last().expect("non-empty"), d)?;
            out.push(next);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectiveConfig {
    pub epsilon: f32,
    /// Trajectory length `T`; chains hold `T - 1` distortions.
    pub t: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub crop: usize,
    pub lr: f64,
    pub seed: u64,
    /// Fixed chain of nets; random over the bank when absent.
    pub chain: Option<Vec<NetKey>>,
}

impl Default for CollectiveConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            t: 4,
            steps: 200,
            batch_size: 8,
            crop: 16,
            lr: 5e-4,
            seed: 0,
            chain: None,
        }
    }
}

impl CollectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::invalid("epsilon must lie in [0, 1]"));
        }
        if self.t < 2 {
            return Err(Error::invalid("collective trajectories need T >= 2"));
        }
        if let Some(c) = &self.chain {
            if c.len() + 1 != self.t {
                return Err(Error::invalid(format!("chain of {} nets does not match T = {}", c.len(), self.t)));
            }
        }
        if self.batch_size == 0 || self.crop < 4 || !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid("batch_size, crop and lr must be positive"));
        }
        Ok(())
    }
}

/// Records the collective objective on `tape`. `stages[t]` is the batch of
/// `I_{t+1}`; `bound` maps each net in the chain to its parameter vars.
fn collective_on_tape(
    tape: &mut Tape<f32>,
    bank: &NetBank,
    bound: &BTreeMap<NetKey, Vec<Var>>,
    chain: &[NetKey],
    stages: &[Var],
    epsilon: f32,
) -> Result<Var> {
    let net = |k: &NetKey| bank.get(*k).ok_or_else(|| Error::invalid(format!("no net for {k:?}")));
    if chain.len() == 1 {
        // global and local trajectories coincide
        let out = net(&chain[0])?.forward_on_tape(tape, &bound[&chain[0]], stages[1])?;
        return tape.l1_loss(out, stages[0]);
    }
    let global = if epsilon > 0.0 {
        let mut x = stages[chain.len()];
        for k in chain.iter().rev() {
            x = net(k)?.forward_on_tape(tape, &bound[k], x)?;
        }
        Some(tape.l1_loss(x, stages[0])?)
    } else {
        None
    };
    let local = if epsilon < 1.0 {
        let mut sum: Option<Var> = None;
        for (t, k) in chain.iter().enumerate() {
            let out = net(k)?.forward_on_tape(tape, &bound[k], stages[t + 1])?;
            let l = tape.l1_loss(out, stages[t])?;
            sum = Some(match sum {
                None => l,
                Some(s) => tape.add(s, l)?,
            });
        }
        sum
    } else {
        None
    };
    match (global, local) {
        (Some(g), None) => Ok(g),
        (None, Some(l)) => Ok(l),
        (Some(g), Some(l)) => {
            let g = tape.scale(g, epsilon);
            let l = tape.scale(l, 1.0 - epsilon);
            tape.add(g, l)
        }
        (None, None) => unreachable!("epsilon selects at least one trajectory"),
    }
}

/// Value of the collective objective for one batch of stages (no update).
pub fn collective_loss(bank: &NetBank, chain: &[NetKey], stages: &[Tensor<f32>], epsilon: f32) -> Result<f32> {
    if stages.len() != chain.len() + 1 || chain.is_empty() {
        return Err(Error::invalid("need T stages for a chain of T - 1 nets"));
    }
    let mut tape = Tape::new();
    let mut bound = BTreeMap::new();
    for k in chain {
        if !bound.contains_key(k) {
            let net = bank.get(*k).ok_or_else(|| Error::invalid(format!("no net for {k:?}")))?;
            bound.insert(*k, net.params().bind_frozen(&mut tape));
        }
    }
    let vars: Vec<Var> = stages.iter().map(|s| tape.constant(s.clone())).collect();
    let loss = collective_on_tape(&mut tape, bank, &bound, chain, &vars, epsilon)?;
    Ok(tape.value(loss).item())
}

/// Collective training over multi-step chains; returns the per-step loss.
pub fn train_collective(bank: &mut NetBank, train: &[ImageRgb], cfg: &CollectiveConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let keys: Vec<NetKey> = bank.keys().collect();
    if keys.is_empty() {
        return Err(Error::invalid("collective training needs at least one net"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adams: BTreeMap<NetKey, Adam<f32>> = keys
        .iter()
        .map(|k| (*k, Adam::new(AdamConfig::with_lr(cfg.lr), bank.get(*k).expect("listed").params())))
        .collect();
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let chain: Vec<NetKey> = match &cfg.chain {
            Some(c) => c.clone(),
            None => (0..cfg.t - 1).map(|_| keys[rng.random_range(0..keys.len())]).collect(),
        };
        let mut per_stage: Vec<Vec<ImageRgb>> = vec![Vec::with_capacity(cfg.batch_size); cfg.t];
        for _ in 0..cfg.batch_size {
            let img = &train[rng.random_range(0..train.len())];
            let clean = random_crop(img, cfg.crop, &mut rng)?;
            let traj = TrajectorySpec::sample(&chain, rng.random());
            for (t, s) in traj.stages(&clean)?.into_iter().enumerate() {
                per_stage[t].push(s);
            }
        }
        let mut tape = Tape::new();
        let mut bound = BTreeMap::new();
        for k in &chain {
            if !bound.contains_key(k) {
                let net = bank.get(*k).ok_or_else(|| Error::invalid(format!("no net for {k:?}")))?;
                bound.insert(*k, net.params().bind(&mut tape));
            }
        }
        let stages: Vec<Var> = per_stage.iter().map(|b| tape.constant(stack(b))).collect();
        let loss = collective_on_tape(&mut tape, bank, &bound, &chain, &stages, cfg.epsilon)?;
        losses.push(tape.value(loss).item() as f64);
        let grads = tape.backward(loss)?;
        for (k, vars) in &bound {
            let net = bank.get_mut(*k).expect("bound nets exist");
            net.params_mut().accumulate_grads(vars, &grads);
            adams.get_mut(k).expect("one optimizer per net").step(net.params_mut());
        }
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ExtractorConfig;
    use crate::image::Severity;
    use crate::restore::{NetDepth, NetFamily};

    fn smooth(seed: u64, n: usize) -> Vec<ImageRgb> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let (a, b, c): (f32, f32, f32) = (rng.random(), rng.random(), rng.random());
                ImageRgb::from_fn(20, 20, |x, y, ch| {
                    0.5 + 0.3 * ((x as f32 * 0.3 * a + y as f32 * 0.2 * b + ch as f32 + c * 6.0).sin())
                })
            })
            .collect()
    }

    #[test]
    fn fixed_distortion_must_match_family_and_band() {
        let mut net = RestoreNet::new(NetFamily::Denoise, Severity::Low, NetDepth::Shallow, 0);
        let sem = SemanticNet::new(&ExtractorConfig::default());
        let data = smooth(1, 4);
        let mut cfg = IndividualConfig {
            steps: 1,
            distortion: Some(DistortionKind::GaussianBlur { sigma: 0.7 }),
            ..IndividualConfig::default()
        };
        assert!(train_individual(&mut net, &data, &[], &sem, &cfg).is_err());
        cfg.distortion = Some(DistortionKind::GaussianNoise { sigma: 0.05 });
        assert!(train_individual(&mut net, &data, &[], &sem, &cfg).is_err());
    }

    #[test]
    fn zero_beta_loss_is_plain_l1() {
        let mut net = RestoreNet::new(NetFamily::Denoise, Severity::High, NetDepth::Shallow, 0);
        let sem = SemanticNet::new(&ExtractorConfig::default());
        let data = smooth(2, 4);
        let cfg = IndividualConfig {
            steps: 1,
            beta: 0.0,
            batch_size: 2,
            ..IndividualConfig::default()
        };
        let before = net.clone();
        let report = train_individual(&mut net, &data, &[], &sem, &cfg).unwrap();
        // replay the first batch
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (i, t) = pairs(&before, &data, 2, cfg.crop, None, &mut rng).unwrap();
        let l1 = (mean_abs(&i[0], &t[0]) + mean_abs(&i[1], &t[1])) / 2.0;
        assert!((report.train_loss[0] - l1).abs() < 1e-7);
    }

    #[test]
    fn two_stage_chain_is_single_step_l1() {
        let bank = NetBank::untrained(0);
        let key = (NetFamily::Denoise, Severity::Low);
        let a = Tensor::full(&[1, 3, 8, 8], 0.25f32);
        let b = Tensor::full(&[1, 3, 8, 8], 0.5f32);
        for eps in [0.0, 0.3, 1.0] {
            assert_eq!(collective_loss(&bank, &[key], &[a.clone(), b.clone()], eps).unwrap(), 0.25);
        }
    }
}
