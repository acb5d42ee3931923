use std::fs;
use std::path::Path;

use ispforge_core::agent::Agent;
use ispforge_core::env::{evaluate, Env, EnvConfig, Sample, StartConfig};
use ispforge_core::features::FeatureExtractor;
use ispforge_core::image::{load_image, save_image};

use super::train_agent::{build_toolbox, load_manifest_samples};
use crate::config::Config;
use crate::error::{CliError, CliResult};

/// Samples from a manifest, or PNGs treated as given start images.
fn load_inputs(cfg: &Config, path: &Path, split: Option<ispforge_core::env::Split>) -> CliResult<(Vec<Sample>, bool)> {
    let full = cfg.resolve(path);
    if !full.is_dir() {
        return Ok((load_manifest_samples(cfg, path, split)?, false));
    }
    let mut paths: Vec<_> = fs::read_dir(&full)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::config(anyhow::anyhow!("no PNG files in {}", full.display())));
    }
    let samples = paths
        .iter()
        .map(|p| {
            let img = load_image(p)?;
            let mut s = Sample::new(p.file_stem().unwrap_or_default().to_string_lossy(), img.clone());
            s.input = Some(img);
            Ok(s)
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok((samples, true))
}

/// Loads the agent and builds the environment it was trained against.
pub fn load_env(cfg: &Config, checkpoint: &Path, samples: Vec<Sample>, start: Option<StartConfig>) -> CliResult<(Env, Agent)> {
    let toolbox = build_toolbox(cfg)?;
    let (agent, meta) = Agent::load(cfg.resolve(checkpoint), toolbox.registry()).map_err(CliError::checkpoint)?;
    let extractor = FeatureExtractor::new(meta.extractor).map_err(CliError::checkpoint)?;
    let env_cfg = EnvConfig {
        start: start.unwrap_or_else(|| cfg.agent.env.start.clone()),
        ..cfg.agent.env.clone()
    };
    let env = Env::new(env_cfg, toolbox, extractor, samples).map_err(CliError::config)?;
    Ok((env, agent))
}

pub fn threads(cfg: &Config) -> usize {
    cfg.threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn run(cfg: &Config, out: &Path) -> CliResult<()> {
    let r = &cfg.run;
    let (samples, from_dir) = load_inputs(cfg, &r.images, r.split)?;
    let start = r.start.clone().or(from_dir.then_some(StartConfig::Given));
    let (env, agent) = load_env(cfg, &r.checkpoint, samples, start)?;
    let (_, episodes) = evaluate(&env, &agent, cfg.seed, threads(cfg))?;
    fs::create_dir_all(out.join("images"))?;
    let mut traces = String::new();
    for ep in &episodes {
        let name = &env.samples()[ep.sample].name;
        save_image(&ep.current, out.join("images").join(format!("{name}.png")))?;
        let steps = ep
            .trace
            .iter()
            .map(|s| {
                let (id, _) = env.toolbox().registry().tool_for_action(s.action)?;
                Ok(serde_json::json!({
                    "t": s.t,
                    "tool": s.tool,
                    "tool_id": id.0,
                    "metric": s.metric,
                    "reward": s.reward,
                }))
            })
            .collect::<CliResult<Vec<_>>>()?;
        let line = serde_json::json!({
            "sample": name,
            "initial_metric": ep.metric_initial,
            "final_metric": ep.metric_current,
            "total_reward": ep.total_reward(),
            "steps": steps,
        });
        traces.push_str(&line.to_string());
        traces.push('\n');
    }
    fs::write(out.join("traces.jsonl"), traces)?;
    log::info!("processed {} images into {}", episodes.len(), out.display());
    Ok(())
}
