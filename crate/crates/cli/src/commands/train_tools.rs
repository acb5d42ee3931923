use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ispforge_core::env::{DatasetManifest, Split};
use ispforge_core::features::{ExtractorConfig, SemanticNet};
use ispforge_core::restore::{train_collective, train_individual, NetBank, NetDepth, NetFamily, RestoreNet};
use ispforge_core::image::Severity;
use ispforge_core::tools::{ToolOp, ToolRegistry, Toolbox};

use crate::config::Config;
use crate::error::{CliError, CliResult};

fn selected(cfg: &Config) -> CliResult<Vec<(NetFamily, Severity)>> {
    let all: Vec<_> = NetFamily::ALL
        .into_iter()
        .flat_map(|f| [(f, Severity::Low), (f, Severity::High)])
        .collect();
    let Some(names) = &cfg.tools.nets else {
        return Ok(all);
    };
    let reg = ToolRegistry::full();
    names
        .iter()
        .map(|n| {
            let id = reg.find(n).ok_or_else(|| CliError::config(anyhow::anyhow!("unknown tool `{n}`")))?;
            match reg.tools()[id.0].op {
                ToolOp::Net { family, severity } => Ok((family, severity)),
                _ => Err(CliError::config(anyhow::anyhow!("`{n}` is not a learned tool"))),
            }
        })
        .collect()
}

pub fn train_tools(cfg: &Config, out: &Path) -> CliResult<()> {
    let t = &cfg.tools;
    let manifest_path = cfg.resolve(&t.dataset);
    let manifest = DatasetManifest::load(&manifest_path).map_err(CliError::config)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let train: Vec<_> = manifest.load_samples(root, Some(Split::Train))?.into_iter().map(|s| s.clean).collect();
    let val: Vec<_> = manifest.load_samples(root, Some(Split::Val))?.into_iter().map(|s| s.clean).collect();
    let semantic = SemanticNet::new(&ExtractorConfig::default());

    let mut bank = NetBank::new();
    let mut reports = BTreeMap::new();
    for (i, (family, severity)) in selected(cfg)?.into_iter().enumerate() {
        let seed = cfg.seed.wrapping_add(i as u64);
        let mut net = RestoreNet::new(family, severity, NetDepth::for_severity(severity), seed);
        let ic = ispforge_core::restore::IndividualConfig {
            seed,
            ..t.individual.clone()
        };
        let report = train_individual(&mut net, &train, &val, &semantic, &ic)?;
        log::info!(
            "{}: val L1 {:?} -> {:?} (identity {:?})",
            net.name(),
            report.val_l1.first().map(|v| v.1),
            report.val_l1.last().map(|v| v.1),
            report.identity_l1
        );
        reports.insert(net.name(), report);
        bank.insert(net);
    }
    let collective = if t.collective_enabled && !bank.is_empty() {
        let cc = ispforge_core::restore::CollectiveConfig {
            seed: cfg.seed ^ 0xc011,
            ..t.collective.clone()
        };
        let losses = train_collective(&mut bank, &train, &cc)?;
        log::info!("collective: final loss {:?}", losses.last());
        losses
    } else {
        Vec::new()
    };
    let registry = ToolRegistry::full()
        .with_enabled(|s| !matches!(s.op, ToolOp::Net { family, severity } if bank.get((family, severity)).is_none()));
    let toolbox = Toolbox::new(registry, bank)?;
    toolbox.save(out)?;
    let log = serde_json::json!({ "individual": reports, "collective_loss": collective });
    fs::write(out.join("train_tools_log.json"), serde_json::to_string_pretty(&log)?)?;
    Ok(())
}
