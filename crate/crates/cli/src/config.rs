//! TOML run configuration. One file carries a section per command; paths
//! are resolved against the file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ispforge_core::agent::AgentConfig;
use ispforge_core::env::{EnvConfig, Split, StartConfig};
use ispforge_core::features::ExtractorConfig;
use ispforge_core::image::{DistortionFamily, Severity};
use ispforge_core::restore::{CollectiveConfig, IndividualConfig};
use ispforge_core::tools::ToolRegistry;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub tools: ToolsSection,
    #[serde(default)]
    pub agent: AgentSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Directory of PNGs; synthetic scenes when absent.
    pub source: Option<PathBuf>,
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub val_fraction: f64,
    pub test_fraction: f64,
    /// Families used to degrade the stored input images.
    pub degrade: Vec<DistortionFamily>,
    pub severity: Option<Severity>,
    pub raw_noise: f32,
    pub out: PathBuf,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: None,
            count: 20,
            width: 32,
            height: 32,
            val_fraction: 0.2,
            test_fraction: 0.2,
            degrade: vec![
                DistortionFamily::GaussianNoise,
                DistortionFamily::GaussianBlur,
                DistortionFamily::BrightnessJitter,
            ],
            severity: None,
            raw_noise: 0.01,
            out: "data".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolsSection {
    pub dataset: PathBuf,
    pub out: PathBuf,
    /// Learned tool names to train; all fourteen when absent.
    pub nets: Option<Vec<String>>,
    pub individual: IndividualConfig,
    pub collective: CollectiveConfig,
    pub collective_enabled: bool,
}

impl Default for ToolsSection {
    fn default() -> Self {
        Self {
            dataset: "data/manifest.json".into(),
            out: "toolbox".into(),
            nets: None,
            individual: IndividualConfig::default(),
            collective: CollectiveConfig::default(),
            collective_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RegistryPreset {
    #[default]
    Full,
    Traditional,
    Brightness,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrySection {
    pub preset: RegistryPreset,
    /// Restricts the preset to these tool names (STOP is always kept).
    pub enable: Option<Vec<String>>,
}

impl RegistrySection {
    pub fn build(&self) -> ispforge_core::Result<ToolRegistry> {
        let base = match self.preset {
            RegistryPreset::Full => ToolRegistry::full(),
            RegistryPreset::Traditional => ToolRegistry::traditional_only(),
            RegistryPreset::Brightness => ToolRegistry::brightness_only(),
        };
        match &self.enable {
            None => Ok(base),
            Some(names) => {
                let picked = ToolRegistry::full().with_enabled_names(names)?;
                Ok(base.with_enabled(|t| picked.find(&t.name).is_some_and(|id| picked.is_enabled(id))))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub dataset: PathBuf,
    pub split: Option<Split>,
    /// Trained toolbox directory; required when learned tools are enabled.
    pub toolbox: Option<PathBuf>,
    pub registry: RegistrySection,
    pub config: AgentConfig,
    pub train: ispforge_core::env::TrainConfig,
    pub env: EnvConfig,
    pub extractor: ExtractorConfig,
    pub out: PathBuf,
}

impl Default for AgentSection {
    fn default() -> Self {
        Self {
            dataset: "data/manifest.json".into(),
            split: Some(Split::Train),
            toolbox: None,
            registry: RegistrySection::default(),
            config: AgentConfig::default(),
            train: ispforge_core::env::TrainConfig::default(),
            env: EnvConfig::default(),
            extractor: ExtractorConfig::default(),
            out: "agent".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub checkpoint: PathBuf,
    /// Dataset manifest, or a directory of PNGs.
    pub images: PathBuf,
    pub split: Option<Split>,
    /// Overrides `[agent.env].start`.
    pub start: Option<StartConfig>,
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            checkpoint: "agent/agent.nnck".into(),
            images: "data/manifest.json".into(),
            split: Some(Split::Test),
            start: None,
            out: "run".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
    pub split: Option<Split>,
    pub start: Option<StartConfig>,
    pub out: PathBuf,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            checkpoint: "agent/agent.nnck".into(),
            manifest: "data/manifest.json".into(),
            split: Some(Split::Test),
            start: None,
            out: "eval".into(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(anyhow::anyhow!("{}: {e}", path.display())))?;
        let mut cfg: Config =
            toml::from_str(&text).map_err(|e| CliError::config(anyhow::anyhow!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate().map_err(CliError::config)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(
            self.schema_version == SCHEMA_VERSION,
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            self.schema_version
        );
        if let Some(t) = self.threads {
            anyhow::ensure!(t >= 1, "threads must be at least 1");
        }
        let d = &self.data;
        anyhow::ensure!(d.count > 0, "data.count must be positive");
        anyhow::ensure!(d.width >= 8 && d.height >= 8, "data images must be at least 8x8");
        anyhow::ensure!(d.width % 2 == 0 && d.height % 2 == 0, "data dimensions must be even");
        anyhow::ensure!(
            d.val_fraction >= 0.0 && d.test_fraction >= 0.0 && d.val_fraction + d.test_fraction < 1.0,
            "val_fraction + test_fraction must lie in [0, 1)"
        );
        anyhow::ensure!(d.raw_noise >= 0.0 && d.raw_noise.is_finite(), "raw_noise must be non-negative");
        self.tools.individual.validate()?;
        self.tools.collective.validate()?;
        self.agent.config.validate()?;
        self.agent.env.validate()?;
        self.agent.extractor.validate()?;
        self.agent.registry.build()?;
        if let Some(s) = &self.run.start {
            EnvConfig { start: s.clone(), ..self.agent.env.clone() }.validate()?;
        }
        if let Some(s) = &self.eval.start {
            EnvConfig { start: s.clone(), ..self.agent.env.clone() }.validate()?;
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}
