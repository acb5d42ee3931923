use std::fs;
use std::path::Path;

use ispforge_core::agent::Agent;
use ispforge_core::env::{train, DatasetManifest, Env, Sample};
use ispforge_core::features::FeatureExtractor;
use ispforge_core::tools::{ToolRegistry, Toolbox};

use crate::config::Config;
use crate::error::{CliError, CliResult};

pub const AGENT_FILE: &str = "agent.nnck";
pub const TRAIN_LOG: &str = "train_log.jsonl";

/// Registry from the config, bound to the trained nets when a toolbox is set.
pub fn build_toolbox(cfg: &Config) -> CliResult<Toolbox> {
    let registry: ToolRegistry = cfg.agent.registry.build().map_err(CliError::config)?;
    match &cfg.agent.toolbox {
        Some(dir) => Toolbox::load(cfg.resolve(dir), registry).map_err(CliError::checkpoint),
        None => Toolbox::traditional(registry).map_err(|e| {
            CliError::config(anyhow::anyhow!("{e}; set [agent].toolbox or disable the learned tools"))
        }),
    }
}

pub fn load_manifest_samples(cfg: &Config, path: &Path, split: Option<ispforge_core::env::Split>) -> CliResult<Vec<Sample>> {
    let path = cfg.resolve(path);
    let manifest = DatasetManifest::load(&path).map_err(CliError::config)?;
    let root = path.parent().unwrap_or(Path::new("."));
    Ok(manifest.load_samples(root, split)?)
}

pub fn train_agent(cfg: &Config, out: &Path) -> CliResult<()> {
    let a = &cfg.agent;
    let toolbox = build_toolbox(cfg)?;
    let samples = load_manifest_samples(cfg, &a.dataset, a.split)?;
    let extractor = FeatureExtractor::new(a.extractor.clone()).map_err(CliError::config)?;
    let registry = toolbox.registry().clone();
    let env = Env::new(a.env.clone(), toolbox, extractor, samples).map_err(CliError::config)?;
    let agent_cfg = ispforge_core::agent::AgentConfig {
        seed: cfg.seed,
        ..a.config.clone()
    };
    let mut agent = Agent::new(agent_cfg, env.extractor().feature_len(), env.action_count()).map_err(CliError::config)?;
    let log = train(&env, &mut agent, &a.train, cfg.seed ^ 0xa9e7)?;
    fs::create_dir_all(out)?;
    agent.save(out.join(AGENT_FILE), &registry, &a.extractor)?;
    fs::write(out.join(TRAIN_LOG), log.to_jsonl())?;
    log::info!("trained {} steps over {} episodes", a.train.steps, log.episode_returns.len());
    Ok(())
}
