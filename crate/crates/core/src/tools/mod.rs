//! The discrete action space: an ordered registry of ISP tools and a
//! toolbox that applies them.

mod equalize;
mod trad;

pub use equalize::{clahe, clahe_with, hist_equalize, ClaheParams, HIST_BINS};
pub use trad::*;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::hex_digest;
use crate::image::{ImageRgb, Severity};
use crate::restore::{severity_name, NetBank, NetFamily, RestoreNet};

pub const REGISTRY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Brightness,
    Contrast,
    Color,
    Noise,
    Blur,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum ToolOp {
    Brightness { offset: f32 },
    Gamma { gamma: f32 },
    HistEqualize,
    Clahe,
    Hue { degrees: f32 },
    Saturation { factor: f32 },
    GrayworldWb,
    GaussianFilter,
    BoxFilter,
    BilateralFilter,
    Sharpen,
    Net { family: NetFamily, severity: Severity },
    Stop,
}

impl ToolOp {
    /// Applies a traditional tool. Learned tools need a [`Toolbox`].
    pub fn apply_trad(&self, img: &ImageRgb) -> Option<ImageRgb> {
        Some(match *self {
            ToolOp::Brightness { offset } => apply_brightness(img, offset),
            ToolOp::Gamma { gamma } => apply_gamma(img, gamma),
            ToolOp::HistEqualize => hist_equalize(img),
            ToolOp::Clahe => clahe(img),
            ToolOp::Hue { degrees } => hue_shift(img, degrees),
            ToolOp::Saturation { factor } => saturation_scale(img, factor),
            ToolOp::GrayworldWb => grayworld_wb(img),
            ToolOp::GaussianFilter => gaussian_filter(img),
            ToolOp::BoxFilter => box_filter(img),
            ToolOp::BilateralFilter => bilateral_filter(img),
            ToolOp::Sharpen => sharpen(img),
            ToolOp::Stop => stop_tool(img),
            ToolOp::Net { .. } => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub category: Category,
    #[serde(flatten)]
    pub op: ToolOp,
}

/// Index into the full registry (enabled or not).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ToolId(pub usize);

/// Ordered tools plus enable flags. Agent actions index the enabled tools
/// in registry order.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolRegistry {
    tools: Vec<ToolSpec>,
    enabled: Vec<bool>,
    actions: Vec<ToolId>,
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    index: usize,
    enabled: bool,
    #[serde(flatten)]
    spec: &'a ToolSpec,
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: u32,
    tools: Vec<ManifestEntry<'a>>,
}

fn nets(tools: &mut Vec<ToolSpec>, family: NetFamily, category: Category) {
    for severity in [Severity::Low, Severity::High] {
        tools.push(ToolSpec {
            name: format!("{}-{}", family.name(), severity_name(severity)),
            category,
            op: ToolOp::Net { family, severity },
        });
    }
}

fn levels(tools: &mut Vec<ToolSpec>, prefix: &str, category: Category, values: &[f32], op: impl Fn(f32) -> ToolOp) {
    for &v in values {
        tools.push(ToolSpec {
            name: format!("{prefix}{v:+.3}"),
            category,
            op: op(v),
        });
    }
}

impl ToolRegistry {
    /// All 52 tools, all enabled.
    pub fn full() -> Self {
        use Category::*;
        let mut t = Vec::with_capacity(52);
        let simple = |name: &str, category, op| ToolSpec {
            name: name.to_string(),
            category,
            op,
        };
        nets(&mut t, NetFamily::Exposure, Brightness);
        levels(&mut t, "brightness", Brightness, &BRIGHTNESS_OFFSETS, |offset| ToolOp::Brightness { offset });
        nets(&mut t, NetFamily::Ctc, Contrast);
        t.push(simple("hist-equalize", Contrast, ToolOp::HistEqualize));
        t.push(simple("clahe", Contrast, ToolOp::Clahe));
        levels(&mut t, "gamma", Contrast, &GAMMAS, |gamma| ToolOp::Gamma { gamma });
        nets(&mut t, NetFamily::Wb, Color);
        levels(&mut t, "hue", Color, &HUE_SHIFTS, |degrees| ToolOp::Hue { degrees });
        levels(&mut t, "saturation", Color, &SATURATION_FACTORS, |factor| ToolOp::Saturation { factor });
        t.push(simple("grayworld-wb", Color, ToolOp::GrayworldWb));
        nets(&mut t, NetFamily::Denoise, Noise);
        t.push(simple("gaussian-filter", Noise, ToolOp::GaussianFilter));
        t.push(simple("box-filter", Noise, ToolOp::BoxFilter));
        t.push(simple("bilateral-filter", Noise, ToolOp::BilateralFilter));
        nets(&mut t, NetFamily::Deblur, Blur);
        t.push(simple("sharpen", Blur, ToolOp::Sharpen));
        nets(&mut t, NetFamily::Sr, Other);
        nets(&mut t, NetFamily::Dejpg, Other);
        t.push(simple("stop", Other, ToolOp::Stop));
        let n = t.len();
        Self::from_parts(t, vec![true; n]).expect("full registry is well formed")
    }

    fn from_parts(tools: Vec<ToolSpec>, enabled: Vec<bool>) -> Result<Self> {
        let stops = tools.iter().filter(|t| t.op == ToolOp::Stop).count();
        if stops != 1 {
            return Err(Error::invalid(format!("registry must contain exactly one stop tool, found {stops}")));
        }
        for (t, &on) in tools.iter().zip(&enabled) {
            if t.op == ToolOp::Stop && !on {
                return Err(Error::invalid("the stop tool cannot be disabled"));
            }
        }
        let actions = (0..tools.len()).filter(|&i| enabled[i]).map(ToolId).collect();
        Ok(Self { tools, enabled, actions })
    }

    /// Keeps only the tools accepted by `keep` (STOP always stays).
    pub fn with_enabled(&self, keep: impl Fn(&ToolSpec) -> bool) -> Self {
        let enabled = self.tools.iter().map(|t| t.op == ToolOp::Stop || keep(t)).collect();
        Self::from_parts(self.tools.clone(), enabled).expect("stop stays enabled")
    }

    /// Enables exactly the named tools (plus STOP); unknown names are errors.
    pub fn with_enabled_names(&self, names: &[String]) -> Result<Self> {
        for n in names {
            if !self.tools.iter().any(|t| &t.name == n) {
                return Err(Error::invalid(format!("unknown tool `{n}`")));
            }
        }
        Ok(self.with_enabled(|t| names.contains(&t.name)))
    }

    /// The 12 additive brightness levels plus STOP.
    pub fn brightness_only() -> Self {
        Self::full().with_enabled(|t| matches!(t.op, ToolOp::Brightness { .. }))
    }

    /// Only the traditional tools (no learned nets).
    pub fn traditional_only() -> Self {
        Self::full().with_enabled(|t| !matches!(t.op, ToolOp::Net { .. }))
    }

    pub fn tools(&self) -> &[ToolSpec] {
        &self.tools
    }

    pub fn is_enabled(&self, id: ToolId) -> bool {
        self.enabled[id.0]
    }

    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    pub fn tool_for_action(&self, action: usize) -> Result<(ToolId, &ToolSpec)> {
        let id = *self
            .actions
            .get(action)
            .ok_or_else(|| Error::invalid(format!("action {action} outside 0..{}", self.actions.len())))?;
        Ok((id, &self.tools[id.0]))
    }

    pub fn action_for_tool(&self, id: ToolId) -> Option<usize> {
        self.actions.iter().position(|&a| a == id)
    }

    pub fn stop_action(&self) -> usize {
        self.actions
            .iter()
            .position(|a| self.tools[a.0].op == ToolOp::Stop)
            .expect("stop is always enabled")
    }

    pub fn find(&self, name: &str) -> Option<ToolId> {
        self.tools.iter().position(|t| t.name == name).map(ToolId)
    }

    pub fn manifest_json(&self) -> String {
        let m = Manifest {
            version: REGISTRY_VERSION,
            tools: self
                .tools
                .iter()
                .enumerate()
                .map(|(index, spec)| ManifestEntry {
                    index,
                    enabled: self.enabled[index],
                    spec,
                })
                .collect(),
        };
        serde_json::to_string(&m).expect("manifest serializes")
    }

    /// SHA-256 of the manifest; changes with order, parameters or enable flags.
    pub fn hash(&self) -> String {
        hex_digest(self.manifest_json().as_bytes())
    }
}

impl Default for ToolRegistry {
    fn default() -> Self {
        Self::full()
    }
}

/// Registry plus the trained nets its learned tools call into.
#[derive(Debug, Clone)]
pub struct Toolbox {
    registry: ToolRegistry,
    nets: NetBank,
}

#[derive(Debug, Serialize, Deserialize)]
struct ToolboxManifest {
    version: u32,
    registry_hash: String,
    nets: Vec<NetEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetEntry {
    tool: String,
    index: usize,
    file: String,
}

pub const TOOLBOX_MANIFEST: &str = "toolbox.json";

impl Toolbox {
    /// Every enabled learned tool must have a net in `nets`.
    pub fn new(registry: ToolRegistry, nets: NetBank) -> Result<Self> {
        for a in 0..registry.action_count() {
            let (_, spec) = registry.tool_for_action(a)?;
            if let ToolOp::Net { family, severity } = spec.op {
                if nets.get((family, severity)).is_none() {
                    return Err(Error::invalid(format!("no trained net for enabled tool `{}`", spec.name)));
                }
            }
        }
        Ok(Self { registry, nets })
    }

    /// Traditional tools only; learned tools must be disabled.
    pub fn traditional(registry: ToolRegistry) -> Result<Self> {
        Self::new(registry, NetBank::new())
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }

    pub fn nets(&self) -> &NetBank {
        &self.nets
    }

    pub fn action_count(&self) -> usize {
        self.registry.action_count()
    }

    pub fn is_stop(&self, action: usize) -> bool {
        action == self.registry.stop_action()
    }

    pub fn apply(&self, action: usize, img: &ImageRgb) -> Result<ImageRgb> {
        let (_, spec) = self.registry.tool_for_action(action)?;
        match spec.op {
            ToolOp::Net { family, severity } => {
                let net = self.nets.get((family, severity)).expect("checked at construction");
                Ok(net.apply(img))
            }
            op => Ok(op.apply_trad(img).expect("traditional op")),
        }
    }

    /// Writes one checkpoint per net plus a manifest binding tools to files.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::from(e).at_path(dir))?;
        let mut entries = Vec::new();
        for net in self.nets.iter() {
            let id = self
                .registry
                .find(&net.name())
                .ok_or_else(|| Error::invalid(format!("net {} has no registry slot", net.name())))?;
            let file = format!("{}.nnck", net.name());
            net.save(dir.join(&file))?;
            entries.push(NetEntry {
                tool: net.name(),
                index: id.0,
                file,
            });
        }
        let m = ToolboxManifest {
            version: REGISTRY_VERSION,
            registry_hash: ToolRegistry::full().hash(),
            nets: entries,
        };
        let path = dir.join(TOOLBOX_MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(&m)?).map_err(|e| Error::from(e).at_path(&path))
    }

    /// Loads nets saved by [`Toolbox::save`] and binds them to `registry`.
    pub fn load(dir: impl AsRef<Path>, registry: ToolRegistry) -> Result<Self> {
        let dir = dir.as_ref();
        let path: PathBuf = dir.join(TOOLBOX_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::from(e).at_path(&path))?;
        let m: ToolboxManifest = serde_json::from_str(&text).map_err(|e| Error::from(e).at_path(&path))?;
        let runtime = ToolRegistry::full().hash();
        if m.registry_hash != runtime {
            return Err(Error::RegistryMismatch {
                expected: m.registry_hash,
                found: runtime,
            });
        }
        let mut bank = NetBank::new();
        for e in &m.nets {
            let net = RestoreNet::load(dir.join(&e.file))?;
            if net.name() != e.tool || registry.find(&e.tool) != Some(ToolId(e.index)) {
                return Err(Error::invalid(format!("toolbox entry `{}` does not match its registry slot", e.tool)));
            }
            bank.insert(net);
        }
        Self::new(registry, bank)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_registry_layout() {
        let r = ToolRegistry::full();
        assert_eq!(r.action_count(), 52);
        let count = |c| r.tools().iter().filter(|t| t.category == c).count();
        assert_eq!(
            [Category::Brightness, Category::Contrast, Category::Color, Category::Noise, Category::Blur, Category::Other].map(count),
            [14, 10, 15, 5, 3, 5]
        );
        assert_eq!(r.stop_action(), 51);
        let mut names: Vec<_> = r.tools().iter().map(|t| &t.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 52);
    }

    #[test]
    fn brightness_subset_has_thirteen_actions() {
        let r = ToolRegistry::brightness_only();
        assert_eq!(r.action_count(), 13);
        assert_eq!(r.stop_action(), 12);
        assert_ne!(r.hash(), ToolRegistry::full().hash());
        for a in 0..12 {
            assert!(matches!(r.tool_for_action(a).unwrap().1.op, ToolOp::Brightness { .. }));
        }
    }

    #[test]
    fn hash_is_stable_and_order_sensitive() {
        let a = ToolRegistry::full();
        assert_eq!(a.hash(), ToolRegistry::full().hash());
        let mut tools = a.tools().to_vec();
        tools.swap(2, 3);
        let b = ToolRegistry::from_parts(tools, vec![true; 52]).unwrap();
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn toolbox_requires_nets_for_enabled_learned_tools() {
        assert!(Toolbox::traditional(ToolRegistry::full()).is_err());
        let tb = Toolbox::traditional(ToolRegistry::traditional_only()).unwrap();
        assert_eq!(tb.action_count(), 52 - 14);
        let img = ImageRgb::filled(8, 8, [0.5; 3]);
        assert_eq!(tb.apply(tb.registry().stop_action(), &img).unwrap(), img);
    }

    #[test]
    fn toolbox_save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let tb = Toolbox::new(ToolRegistry::full(), NetBank::untrained(3)).unwrap();
        tb.save(dir.path()).unwrap();
        let back = Toolbox::load(dir.path(), ToolRegistry::full()).unwrap();
        assert_eq!(back.nets().len(), 14);
        assert_eq!(back.nets().get((NetFamily::Sr, Severity::High)), tb.nets().get((NetFamily::Sr, Severity::High)));
    }
}
