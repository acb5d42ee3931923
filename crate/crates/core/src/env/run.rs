use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Env, Episode};
use crate::agent::{ActionMode, Agent, ReplayBuffer, StepReport, Transition};
use crate::error::{Error, Result};

/// Runs `ep` to completion, choosing actions with `policy`.
pub fn rollout(env: &Env, state: Vec<f32>, ep: &mut Episode, policy: &mut dyn FnMut(&[f32]) -> Result<usize>) -> Result<()> {
    let mut state = state;
    while !ep.done {
        let a = policy(&state)?;
        state = env.step(ep, a)?.state;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Environment steps.
    pub steps: usize,
    /// Transitions collected before the first gradient step.
    pub warmup: usize,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 10_000,
            warmup: 1_000,
            log_every: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub step: usize,
    pub episodes: usize,
    /// Mean return of episodes finished since the previous entry.
    pub mean_return: Option<f64>,
    pub q_loss: Option<f64>,
    pub policy_loss: Option<f64>,
    pub entropy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub entries: Vec<TrainLogEntry>,
    pub episode_returns: Vec<f64>,
}

impl TrainLog {
    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("log entries serialize") + "\n")
            .collect()
    }
}

/// Interleaves sampled-policy rollouts with one gradient step per
/// environment step once `warmup` transitions are stored.
pub fn train(env: &Env, agent: &mut Agent, cfg: &TrainConfig, seed: u64) -> Result<TrainLog> {
    if agent.action_count() != env.action_count() {
        return Err(Error::LengthMismatch {
            expected: env.action_count(),
            found: agent.action_count(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buffer = ReplayBuffer::new(agent.config().buffer_capacity);
    let mut log = TrainLog::default();
    let mut current: Option<(Arc<[f32]>, Episode)> = None;
    let mut window_returns = Vec::new();
    let mut last = None;
    for step in 1..=cfg.steps {
        let (state, mut ep) = match current.take() {
            Some(c) => c,
            None => {
                let (s, ep) = env.reset(rng.random())?;
                (Arc::from(s), ep)
            }
        };
        let a = agent.select_action(&state, ActionMode::Sample, &mut rng)?;
        let out = env.step(&mut ep, a)?;
        let next: Arc<[f32]> = Arc::from(out.state);
        buffer.push(Transition {
            state,
            action: a,
            reward: out.reward as f32,
            next_state: next.clone(),
            done: out.done,
        })?;
        if out.done {
            let r = ep.total_reward();
            log.episode_returns.push(r);
            window_returns.push(r);
        } else {
            current = Some((next, ep));
        }
        if buffer.len() >= cfg.warmup.max(1) {
            if let StepReport::Trained {
                q_loss,
                policy_loss,
                entropy,
            } = agent.train_step(&buffer)?
            {
                last = Some((q_loss, policy_loss, entropy));
            }
        }
        if cfg.log_every > 0 && (step % cfg.log_every == 0 || step == cfg.steps) {
            let mean_return = (!window_returns.is_empty()).then(|| window_returns.iter().sum::<f64>() / window_returns.len() as f64);
            window_returns.clear();
            let entry = TrainLogEntry {
                step,
                episodes: log.episode_returns.len(),
                mean_return,
                q_loss: last.map(|l| l.0),
                policy_loss: last.map(|l| l.1),
                entropy: last.map(|l| l.2),
            };
            log::info!(
                "step {step}: episodes {} return {:?} q {:?} pi {:?} H {:?}",
                entry.episodes,
                entry.mean_return,
                entry.q_loss,
                entry.policy_loss,
                entry.entropy
            );
            log.entries.push(entry);
        }
    }
    Ok(log)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub sample: String,
    pub initial_metric: f64,
    pub final_metric: f64,
    pub length: usize,
    pub total_reward: f64,
    pub tools: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub episodes: Vec<EpisodeRow>,
    pub mean_initial: f64,
    pub mean_final: f64,
    pub median_initial: f64,
    pub median_final: f64,
    pub mean_length: f64,
    pub tool_histogram: BTreeMap<String, usize>,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl EvalReport {
    pub fn from_episodes(metric: &str, episodes: Vec<EpisodeRow>) -> Self {
        let n = episodes.len().max(1) as f64;
        let initial: Vec<f64> = episodes.iter().map(|e| e.initial_metric).collect();
        let fin: Vec<f64> = episodes.iter().map(|e| e.final_metric).collect();
        let mut tool_histogram = BTreeMap::new();
        for e in &episodes {
            for t in &e.tools {
                *tool_histogram.entry(t.clone()).or_insert(0) += 1;
            }
        }
        Self {
            metric: metric.to_string(),
            mean_initial: initial.iter().sum::<f64>() / n,
            mean_final: fin.iter().sum::<f64>() / n,
            median_initial: median(initial),
            median_final: median(fin),
            mean_length: episodes.iter().map(|e| e.length as f64).sum::<f64>() / n,
            tool_histogram,
            episodes,
        }
    }

    /// One row per episode; tools are `|`-separated.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample,initial_metric,final_metric,length,total_reward,tools\n");
        for e in &self.episodes {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                e.sample.replace(',', "_"),
                e.initial_metric,
                e.final_metric,
                e.length,
                e.total_reward,
                e.tools.join("|")
            );
        }
        out
    }
}

fn episode_seed(seed: u64, i: usize) -> u64 {
    ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)).random()
}

fn run_episode(env: &Env, i: usize, seed: u64, policy: &mut dyn FnMut(&[f32]) -> Result<usize>) -> Result<(EpisodeRow, Episode)> {
    let (state, mut ep) = env.reset_sample(i, episode_seed(seed, i))?;
    rollout(env, state, &mut ep, policy)?;
    let row = EpisodeRow {
        sample: env.samples()[i].name.clone(),
        initial_metric: ep.metric_initial,
        final_metric: ep.metric_current,
        length: ep.t,
        total_reward: ep.total_reward(),
        tools: ep.trace.iter().map(|s| s.tool.clone()).collect(),
    };
    Ok((row, ep))
}

/// Runs `policy` once on every sample. Episode `i` uses a seed derived
/// from `(seed, i)`, so reports are reproducible.
pub fn evaluate_with(env: &Env, seed: u64, policy: &mut dyn FnMut(&[f32]) -> Result<usize>) -> Result<(EvalReport, Vec<Episode>)> {
    let mut rows = Vec::with_capacity(env.samples().len());
    let mut eps = Vec::with_capacity(env.samples().len());
    for i in 0..env.samples().len() {
        let (row, ep) = run_episode(env, i, seed, policy)?;
        rows.push(row);
        eps.push(ep);
    }
    Ok((EvalReport::from_episodes(env.config().reward.metric.name(), rows), eps))
}

/// Greedy evaluation of `agent` over `threads` workers. The result does not
/// depend on the thread count.
pub fn evaluate(env: &Env, agent: &Agent, seed: u64, threads: usize) -> Result<(EvalReport, Vec<Episode>)> {
    let n = env.samples().len();
    let threads = threads.clamp(1, n.max(1));
    let chunk = n.div_ceil(threads);
    let parts: Vec<Result<Vec<(EpisodeRow, Episode)>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|k| {
                scope.spawn(move || {
                    let mut greedy = |s: &[f32]| agent.select_action(s, ActionMode::Greedy, &mut rand::rng());
                    (k * chunk..((k + 1) * chunk).min(n)).map(|i| run_episode(env, i, seed, &mut greedy)).collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    let mut rows = Vec::with_capacity(n);
    let mut eps = Vec::with_capacity(n);
    for part in parts {
        for (row, ep) in part? {
            rows.push(row);
            eps.push(ep);
        }
    }
    Ok((EvalReport::from_episodes(env.config().reward.metric.name(), rows), eps))
}
