//! Discrete soft actor-critic tool selector.

mod loss;
mod mlp;
mod replay;

pub use loss::{elementwise_min, mean_entropy, policy_loss, q_loss, soft_targets, LossGrad, TwinLossGrad};
pub use mlp::Mlp;
pub use replay::{Batch, ReplayBuffer, Transition};

use std::path::Path;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ExtractorConfig;
use crate::nn::{softmax_rows, Adam, AdamConfig, Checkpoint, ParamSet, Real, Tensor};
use crate::tools::ToolRegistry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub kappa: f64,
    pub tau: f64,
    pub lr_policy: f64,
    pub lr_q: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub hidden: usize,
    /// Linear layers in the policy (2, 3 or 4); the critics use the same.
    pub policy_depth: usize,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            kappa: 0.05,
            tau: 0.005,
            lr_policy: 3e-4,
            lr_q: 3e-4,
            batch_size: 64,
            buffer_capacity: 50_000,
            hidden: 256,
            policy_depth: 2,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return bad("kappa must be non-negative");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.lr_policy > 0.0 && self.lr_q > 0.0 && self.lr_policy.is_finite() && self.lr_q.is_finite()) {
            return bad("learning rates must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size || self.hidden == 0 {
            return bad("batch_size, hidden must be positive and buffer_capacity >= batch_size");
        }
        if !(2..=4).contains(&self.policy_depth) {
            return bad("policy_depth must be 2, 3 or 4");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionMode {
    Sample,
    Greedy,
}

/// Result of one [`Agent::train_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepReport {
    WarmingUp { have: usize, need: usize },
    Trained { q_loss: f64, policy_loss: f64, entropy: f64 },
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    policy: Mlp<f32>,
    q1: Mlp<f32>,
    q2: Mlp<f32>,
    q1_target: Mlp<f32>,
    q2_target: Mlp<f32>,
    opt_policy: Adam<f32>,
    opt_q1: Adam<f32>,
    opt_q2: Adam<f32>,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMeta {
    pub kind: String,
    pub registry_hash: String,
    pub action_count: usize,
    pub feature_len: usize,
    pub extractor: ExtractorConfig,
    pub extractor_hash: String,
    pub config: AgentConfig,
}

fn apply_grads(params: &mut ParamSet<f32>, grads: &[Tensor<f32>]) {
    for (p, g) in params.iter_mut().zip(grads) {
        p.grad.data_mut().copy_from_slice(g.data());
    }
}

impl Agent {
    pub fn new(config: AgentConfig, feature_len: usize, action_count: usize) -> Result<Self> {
        config.validate()?;
        if action_count < 2 || feature_len == 0 {
            return Err(Error::invalid("agent needs at least two actions and a non-empty state"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.policy_depth;
        let h = config.hidden;
        let policy = Mlp::new(feature_len, h, action_count, d, &mut rng);
        let q1 = Mlp::new(feature_len, h, action_count, d, &mut rng);
        let q2 = Mlp::new(feature_len, h, action_count, d, &mut rng);
        Ok(Self::assemble(config, policy, q1.clone(), q2.clone(), q1, q2, rng))
    }

    fn assemble(
        config: AgentConfig,
        policy: Mlp<f32>,
        q1: Mlp<f32>,
        q2: Mlp<f32>,
        q1_target: Mlp<f32>,
        q2_target: Mlp<f32>,
        rng: ChaCha8Rng,
    ) -> Self {
        let opt_policy = Adam::new(AdamConfig::with_lr(config.lr_policy), policy.params());
        let opt_q1 = Adam::new(AdamConfig::with_lr(config.lr_q), q1.params());
        let opt_q2 = Adam::new(AdamConfig::with_lr(config.lr_q), q2.params());
        Self {
            config,
            policy,
            q1,
            q2,
            q1_target,
            q2_target,
            opt_policy,
            opt_q1,
            opt_q2,
            rng,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn action_count(&self) -> usize {
        self.policy.output_len()
    }

    pub fn feature_len(&self) -> usize {
        self.policy.input_len()
    }

    pub fn policy(&self) -> &Mlp<f32> {
        &self.policy
    }

    pub fn critics(&self) -> [&Mlp<f32>; 4] {
        [&self.q1, &self.q2, &self.q1_target, &self.q2_target]
    }

    fn row(&self, state: &[f32]) -> Result<Tensor<f32>> {
        if state.len() != self.feature_len() {
            return Err(Error::LengthMismatch {
                expected: self.feature_len(),
                found: state.len(),
            });
        }
        Tensor::new(&[1, state.len()], state.to_vec())
    }

    pub fn logits(&self, state: &[f32]) -> Result<Vec<f32>> {
        Ok(self.policy.forward(&self.row(state)?)?.into_data())
    }

    pub fn probabilities(&self, state: &[f32]) -> Result<Vec<f32>> {
        Ok(softmax_rows(&self.policy.forward(&self.row(state)?)?).into_data())
    }

    /// `min(q1, q2)` per action.
    pub fn q_value(&self, state: &[f32]) -> Result<Vec<f32>> {
        let x = self.row(state)?;
        Ok(elementwise_min(&self.q1.forward(&x)?, &self.q2.forward(&x)?).into_data())
    }

    pub fn select_action(&self, state: &[f32], mode: ActionMode, rng: &mut impl Rng) -> Result<usize> {
        select_from_logits(&self.logits(state)?, mode, rng)
    }

    /// One critic step, one actor step, then the target update.
    pub fn train_step(&mut self, buffer: &ReplayBuffer) -> Result<StepReport> {
        let need = self.config.batch_size;
        let Some(sample) = buffer.sample(need, &mut self.rng) else {
            return Ok(StepReport::WarmingUp { have: buffer.len(), need });
        };
        let batch = Batch::<f32>::from_transitions(&sample)?;
        if batch.actions.iter().any(|&a| a >= self.action_count()) {
            return Err(Error::invalid("replayed action outside the action space"));
        }
        let (gamma, kappa) = (self.config.gamma as f32, self.config.kappa as f32);
        let ql = q_loss(&self.q1, &self.q2, &self.q1_target, &self.q2_target, &self.policy, &batch, gamma, kappa)?;
        apply_grads(self.q1.params_mut(), &ql.grads_q1);
        apply_grads(self.q2.params_mut(), &ql.grads_q2);
        self.opt_q1.step(self.q1.params_mut());
        self.opt_q2.step(self.q2.params_mut());

        let pl = policy_loss(&self.policy, &self.q1, &self.q2, &batch.states, kappa)?;
        apply_grads(self.policy.params_mut(), &pl.grads);
        self.opt_policy.step(self.policy.params_mut());
        self.soft_update(self.config.tau as f32)?;
        let entropy = mean_entropy(&self.policy.forward(&batch.states)?);
        Ok(StepReport::Trained {
            q_loss: ql.value as f64,
            policy_loss: pl.value as f64,
            entropy: entropy as f64,
        })
    }

    pub fn soft_update(&mut self, tau: f32) -> Result<()> {
        self.q1_target.params_mut().polyak_from(self.q1.params(), tau)?;
        self.q2_target.params_mut().polyak_from(self.q2.params(), tau)
    }

    pub fn to_checkpoint(&self, registry: &ToolRegistry, extractor: &ExtractorConfig) -> Result<Checkpoint> {
        if registry.action_count() != self.action_count() {
            return Err(Error::LengthMismatch {
                expected: registry.action_count(),
                found: self.action_count(),
            });
        }
        let meta = AgentMeta {
            kind: "agent".into(),
            registry_hash: registry.hash(),
            action_count: self.action_count(),
            feature_len: self.feature_len(),
            extractor: extractor.clone(),
            extractor_hash: extractor.hash(),
            config: self.config.clone(),
        };
        let mut ck = Checkpoint::new(serde_json::to_value(meta)?);
        for (prefix, net) in self.named_nets() {
            net.params().store_into(&mut ck, prefix);
        }
        Ok(ck)
    }

    fn named_nets(&self) -> [(&'static str, &Mlp<f32>); 5] {
        [
            ("policy.", &self.policy),
            ("q1.", &self.q1),
            ("q2.", &self.q2),
            ("q1_target.", &self.q1_target),
            ("q2_target.", &self.q2_target),
        ]
    }

    /// Rebuilds an agent and verifies it against `registry`.
    pub fn from_checkpoint(ck: &Checkpoint, registry: &ToolRegistry) -> Result<(Self, AgentMeta)> {
        let meta: AgentMeta = serde_json::from_value(ck.meta.clone())
            .map_err(|e| Error::Decode { offset: 12, reason: format!("agent metadata: {e}") })?;
        if meta.kind != "agent" {
            return Err(Error::invalid(format!("checkpoint kind `{}` is not an agent", meta.kind)));
        }
        let runtime = registry.hash();
        if meta.registry_hash != runtime {
            return Err(Error::RegistryMismatch {
                expected: meta.registry_hash,
                found: runtime,
            });
        }
        let recomputed = meta.extractor.hash();
        if recomputed != meta.extractor_hash {
            return Err(Error::ExtractorMismatch {
                expected: meta.extractor_hash,
                found: recomputed,
            });
        }
        let mut agent = Agent::new(meta.config.clone(), meta.feature_len, meta.action_count)?;
        agent.policy.params_mut().load_from(ck, "policy.")?;
        agent.q1.params_mut().load_from(ck, "q1.")?;
        agent.q2.params_mut().load_from(ck, "q2.")?;
        agent.q1_target.params_mut().load_from(ck, "q1_target.")?;
        agent.q2_target.params_mut().load_from(ck, "q2_target.")?;
        let a = agent;
        let agent = Self::assemble(a.config, a.policy, a.q1, a.q2, a.q1_target, a.q2_target, a.rng);
        Ok((agent, meta))
    }

    pub fn save(&self, path: impl AsRef<Path>, registry: &ToolRegistry, extractor: &ExtractorConfig) -> Result<()> {
        self.to_checkpoint(registry, extractor)?.save(path)
    }

    pub fn load(path: impl AsRef<Path>, registry: &ToolRegistry) -> Result<(Self, AgentMeta)> {
        let path = path.as_ref();
        Self::from_checkpoint(&Checkpoint::load(path)?, registry).map_err(|e| match e {
            Error::RegistryMismatch { .. } => e,
            e => e.at_path(path),
        })
    }
}

/// Samples from `softmax(logits)` or takes the lowest-index argmax.
pub fn select_from_logits<T: Real>(logits: &[T], mode: ActionMode, rng: &mut impl Rng) -> Result<usize> {
    if logits.is_empty() || logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("logits must be finite and non-empty"));
    }
    let as_f64: Vec<f64> = logits.iter().map(|v| v.to_f64()).collect();
    match mode {
        ActionMode::Greedy => {
            let mut best = 0;
            for (i, &v) in as_f64.iter().enumerate() {
                if v > as_f64[best] {
                    best = i;
                }
            }
            Ok(best)
        }
        ActionMode::Sample => {
            let m = as_f64.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = as_f64.iter().map(|v| (v - m).exp()).collect();
            let dist = WeightedIndex::new(&w).map_err(|e| Error::invalid(format!("sampling weights: {e}")))?;
            Ok(dist.sample(rng))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_tie_break_lowest_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_from_logits(&[1.0f32, 3.0, 3.0, 0.0], ActionMode::Greedy, &mut rng).unwrap(), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }

    #[test]
    fn uniform_sampling_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[select_from_logits(&[0.5f32; 4], ActionMode::Sample, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn q_value_is_elementwise_min() {
        let a = Tensor::new(&[1, 2], vec![1.0f32, 3.0]).unwrap();
        let b = Tensor::new(&[1, 2], vec![2.0f32, 0.0]).unwrap();
        assert_eq!(elementwise_min(&a, &b).data(), &[1.0, 0.0]);
    }

    #[test]
    fn warming_up_until_batch_available() {
        let cfg = AgentConfig {
            batch_size: 4,
            hidden: 8,
            ..AgentConfig::default()
        };
        let mut agent = Agent::new(cfg, 3, 2).unwrap();
        let buf = ReplayBuffer::new(10);
        assert_eq!(agent.train_step(&buf).unwrap(), StepReport::WarmingUp { have: 0, need: 4 });
    }

    #[test]
    fn checkpoint_round_trip_and_registry_guard() {
        let reg = ToolRegistry::brightness_only();
        let ext = ExtractorConfig::default();
        let cfg = AgentConfig {
            hidden: 8,
            ..AgentConfig::default()
        };
        let agent = Agent::new(cfg, 5, reg.action_count()).unwrap();
        let ck = Checkpoint::from_bytes(&agent.to_checkpoint(&reg, &ext).unwrap().to_bytes().unwrap()).unwrap();
        let (back, meta) = Agent::from_checkpoint(&ck, &reg).unwrap();
        assert_eq!(meta.extractor, ext);
        assert_eq!(back.probabilities(&[0.1; 5]).unwrap(), agent.probabilities(&[0.1; 5]).unwrap());
        let err = Agent::from_checkpoint(&ck, &ToolRegistry::traditional_only()).unwrap_err();
        assert!(matches!(err, Error::RegistryMismatch { .. }));
    }
}
