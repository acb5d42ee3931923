use std::fs;
use std::path::Path;

use ispforge_core::env::evaluate;

use super::run::{load_env, threads};
use super::train_agent::load_manifest_samples;
use crate::config::Config;
use crate::error::CliResult;

pub fn eval(cfg: &Config, out: &Path) -> CliResult<()> {
    let e = &cfg.eval;
    let samples = load_manifest_samples(cfg, &e.manifest, e.split)?;
    let (env, agent) = load_env(cfg, &e.checkpoint, samples, e.start.clone())?;
    let (report, _) = evaluate(&env, &agent, cfg.seed, threads(cfg))?;
    fs::create_dir_all(out)?;
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    fs::write(out.join("report.csv"), report.to_csv())?;
    log::info!(
        "{}: mean {:.3} -> {:.3} over {} episodes",
        report.metric,
        report.mean_initial,
        report.mean_final,
        report.episodes.len()
    );
    Ok(())
}
