//! `ispforge` command-line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;

use config::Config;
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "ispforge", version, about = "Train and run a tool-selecting camera ISP agent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for evaluation.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; defaults to the section's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a dataset (clean/degraded images, raw, labels, manifest).
    GenData(Common),
    /// Train the restoration nets and save a toolbox.
    TrainTools(Common),
    /// Train the tool-selection agent.
    TrainAgent(Common),
    /// Process images with a trained agent.
    Run(Common),
    /// Evaluate a trained agent and write a report.
    Eval(Common),
}

fn init_logging() -> CliResult<()> {
    let level = std::env::var("ISPFORGE_LOG").unwrap_or_else(|_| "info".into());
    let filter = match level.as_str() {
        "error" => log::LevelFilter::Error,
        "info" => log::LevelFilter::Info,
        "debug" => log::LevelFilter::Debug,
        other => {
            return Err(CliError::config(anyhow::anyhow!(
                "ISPFORGE_LOG must be error, info or debug, got `{other}`"
            )))
        }
    };
    env_logger::Builder::new().filter_level(filter).format_timestamp(None).init();
    Ok(())
}

fn execute(cli: Cli) -> CliResult<()> {
    init_logging()?;
    let (common, section_out, f): (_, fn(&Config) -> &PathBuf, fn(&Config, &std::path::Path) -> CliResult<()>) =
        match &cli.command {
            Command::GenData(c) => (c, |c| &c.data.out, commands::gen_data),
            Command::TrainTools(c) => (c, |c| &c.tools.out, commands::train_tools),
            Command::TrainAgent(c) => (c, |c| &c.agent.out, commands::train_agent),
            Command::Run(c) => (c, |c| &c.run.out, commands::run),
            Command::Eval(c) => (c, |c| &c.eval.out, commands::eval),
        };
    let mut cfg = Config::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(CliError::config(anyhow::anyhow!("--threads must be at least 1")));
        }
        cfg.threads = Some(t);
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.resolve(section_out(&cfg)));
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("effective_config.json"), serde_json::to_string_pretty(&cfg)?)?;
    f(&cfg, &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("{}", e.json());
            ExitCode::from(e.code)
        }
    }
}
