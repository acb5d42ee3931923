//! Learned restoration tools: shallow residual CNNs, each paired with the
//! degradation it undoes, plus their individual and collective training.

mod train;

pub use train::{
    collective_loss, train_collective, train_individual, validation_l1, CollectiveConfig, IndividualConfig, TrainReport,
    TrajectorySpec,
};

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{DistortionFamily, DistortionKind, ImageRgb, Severity};
use crate::nn::{conv2d_forward, kaiming_uniform, Checkpoint, ParamSet, Padding, Tape, Tensor, Var};

/// The seven learned tool families and the degradation each one inverts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetFamily {
    Exposure,
    Ctc,
    Wb,
    Denoise,
    Deblur,
    Sr,
    Dejpg,
}

impl NetFamily {
    pub const ALL: [NetFamily; 7] = [
        NetFamily::Exposure,
        NetFamily::Ctc,
        NetFamily::Wb,
        NetFamily::Denoise,
        NetFamily::Deblur,
        NetFamily::Sr,
        NetFamily::Dejpg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NetFamily::Exposure => "exposure-net",
            NetFamily::Ctc => "ctc-net",
            NetFamily::Wb => "wb-net",
            NetFamily::Denoise => "denoise-net",
            NetFamily::Deblur => "deblur-net",
            NetFamily::Sr => "sr-net",
            NetFamily::Dejpg => "dejpg-net",
        }
    }

    pub fn distortion(self) -> DistortionFamily {
        match self {
            NetFamily::Exposure => DistortionFamily::BrightnessJitter,
            NetFamily::Ctc => DistortionFamily::ToneJitter,
            NetFamily::Wb => DistortionFamily::ChannelGain,
            NetFamily::Denoise => DistortionFamily::GaussianNoise,
            NetFamily::Deblur => DistortionFamily::GaussianBlur,
            NetFamily::Sr => DistortionFamily::DownUpResize,
            NetFamily::Dejpg => DistortionFamily::JpegSim,
        }
    }

    pub fn for_distortion(d: DistortionFamily) -> NetFamily {
        Self::ALL.into_iter().find(|f| f.distortion() == d).expect("every distortion has an inverse tool")
    }
}

/// Whether a distortion's parameters fall inside a severity band.
pub fn in_severity_band(kind: &DistortionKind, severity: Severity) -> bool {
    let hi = severity == Severity::High;
    let within = |v: f32, lo: f32, mid: f32, top: f32| {
        let e = 1e-6;
        if hi {
            v >= mid - e && v <= top + e
        } else {
            v >= lo - e && v <= mid + e
        }
    };
    match *kind {
        DistortionKind::GaussianNoise { sigma } => within(sigma, 0.01, 0.03, 0.08),
        DistortionKind::GaussianBlur { sigma } => within(sigma, 0.5, 1.0, 2.0),
        DistortionKind::JpegSim { quality } => {
            if hi {
                (25..=60).contains(&quality)
            } else {
                (60..=85).contains(&quality)
            }
        }
        DistortionKind::BrightnessJitter { offset } => within(offset.abs(), 0.05, 0.15, 0.35),
        DistortionKind::DownUpResize | DistortionKind::ToneJitter { .. } | DistortionKind::ChannelGain { .. } => true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetDepth {
    /// conv(3->16), conv(16->16), conv(16->3)
    Shallow,
    /// conv(3->24), six conv(24->24), conv(24->3)
    Deep,
}

impl NetDepth {
    pub fn layers(self) -> usize {
        match self {
            NetDepth::Shallow => 3,
            NetDepth::Deep => 8,
        }
    }

    pub fn width(self) -> usize {
        match self {
            NetDepth::Shallow => 16,
            NetDepth::Deep => 24,
        }
    }

    /// Default architecture for each severity variant.
    pub fn for_severity(s: Severity) -> Self {
        match s {
            Severity::Low => NetDepth::Shallow,
            Severity::High => NetDepth::Deep,
        }
    }
}

pub type NetKey = (NetFamily, Severity);

/// Residual restoration CNN: `out = clamp(x + f(x))`, mirror-padded 3x3
/// convolutions with ReLU between them. The last layer starts at zero so an
/// untrained net is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct RestoreNet {
    pub family: NetFamily,
    pub severity: Severity,
    pub depth: NetDepth,
    params: ParamSet<f32>,
}

impl RestoreNet {
    pub fn new(family: NetFamily, severity: Severity, depth: NetDepth, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let layers = depth.layers();
        let width = depth.width();
        for l in 0..layers {
            let c_in = if l == 0 { 3 } else { width };
            let c_out = if l + 1 == layers { 3 } else { width };
            let w = if l + 1 == layers {
                Tensor::zeros(&[c_out, c_in, 3, 3])
            } else {
                kaiming_uniform(&[c_out, c_in, 3, 3], c_in * 9, &mut rng)
            };
            params.add(format!("conv{l}.weight"), w).expect("unique");
            params.add(format!("conv{l}.bias"), Tensor::zeros(&[c_out])).expect("unique");
        }
        Self {
            family,
            severity,
            depth,
            params,
        }
    }

    pub fn key(&self) -> NetKey {
        (self.family, self.severity)
    }

    pub fn name(&self) -> String {
        format!("{}-{}", self.family.name(), severity_name(self.severity))
    }

    pub fn params(&self) -> &ParamSet<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<f32> {
        &mut self.params
    }

    /// Records the forward pass on `tape` using already-bound parameter vars.
    pub fn forward_on_tape(&self, tape: &mut Tape<f32>, vars: &[Var], x: Var) -> Result<Var> {
        let layers = self.depth.layers();
        let mut h = x;
        for l in 0..layers {
            h = tape.conv2d(h, vars[2 * l], vars[2 * l + 1], 1, Padding::Mirror)?;
            if l + 1 < layers {
                h = tape.relu(h);
            }
        }
        let sum = tape.add(x, h)?;
        Ok(tape.clamp01(sum))
    }

    /// Forward pass on a `[N, 3, H, W]` batch without recording.
    pub fn forward(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let layers = self.depth.layers();
        let mut h = x.clone();
        for l in 0..layers {
            let (y, _, _) = conv2d_forward(&h, self.params.value(2 * l), self.params.value(2 * l + 1), 1, Padding::Mirror)?;
            h = if l + 1 < layers { y.map(|v| v.max(0.0)) } else { y };
        }
        let data = x.data().iter().zip(h.data()).map(|(a, b)| (a + b).clamp(0.0, 1.0)).collect();
        Tensor::new(x.shape(), data)
    }

    /// Single forward pass over one image.
    pub fn apply(&self, img: &ImageRgb) -> ImageRgb {
        let (w, h) = img.dims();
        let x = Tensor::new(&[1, 3, h, w], img.data().to_vec()).expect("planar layout");
        let y = self.forward(&x).expect("restore net shapes are fixed");
        ImageRgb::from_planar_clamped(w, h, y.into_data()).expect("same dimensions")
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(serde_json::json!({
            "kind": "restore-net",
            "family": self.family,
            "severity": self.severity,
            "depth": self.depth,
        }));
        self.params.store_into(&mut ck, "");
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        #[derive(Deserialize)]
        struct Meta {
            kind: String,
            family: NetFamily,
            severity: Severity,
            depth: NetDepth,
        }
        let meta: Meta = serde_json::from_value(ck.meta.clone())
            .map_err(|e| Error::Decode { offset: 12, reason: format!("restore-net metadata: {e}") })?;
        if meta.kind != "restore-net" {
            return Err(Error::invalid(format!("checkpoint kind `{}` is not a restore net", meta.kind)));
        }
        let mut net = RestoreNet::new(meta.family, meta.severity, meta.depth, 0);
        net.params.load_from(ck, "")?;
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_checkpoint(&Checkpoint::load(path)?).map_err(|e| e.at_path(path))
    }
}

pub fn severity_name(s: Severity) -> &'static str {
    match s {
        Severity::Low => "low",
        Severity::High => "high",
    }
}

/// All learned tools, keyed by family and severity.
#[derive(Debug, Clone, Default)]
pub struct NetBank {
    nets: BTreeMap<NetKey, RestoreNet>,
}

impl NetBank {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fresh (identity) nets for every family and both severities.
    pub fn untrained(seed: u64) -> Self {
        let mut bank = Self::new();
        for (i, f) in NetFamily::ALL.into_iter().enumerate() {
            for (j, s) in [Severity::Low, Severity::High].into_iter().enumerate() {
                let net = RestoreNet::new(f, s, NetDepth::for_severity(s), seed.wrapping_add((2 * i + j) as u64));
                bank.insert(net);
            }
        }
        bank
    }

    pub fn insert(&mut self, net: RestoreNet) {
        self.nets.insert(net.key(), net);
    }

    pub fn get(&self, key: NetKey) -> Option<&RestoreNet> {
        self.nets.get(&key)
    }

    pub fn get_mut(&mut self, key: NetKey) -> Option<&mut RestoreNet> {
        self.nets.get_mut(&key)
    }

    pub fn keys(&self) -> impl Iterator<Item = NetKey> + '_ {
        self.nets.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &RestoreNet> {
        self.nets.values()
    }

    pub fn len(&self) -> usize {
        self.nets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nets.is_empty()
    }
}
