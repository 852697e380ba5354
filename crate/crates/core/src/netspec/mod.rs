//! Network descriptions: layer geometry plus per-layer precision profiles.
//!
//! Networks are written as TOML documents:
//!
//! ```toml
//! name = "tiny"
//! conv_pw_100 = 11          # weight precision shared by all conv layers
//! conv_pw_99 = 10
//!
//! [[layers]]
//! type = "conv"
//! name = "conv1"            # optional
//! cin = 3
//! kx = 3
//! ky = 3
//! out_h = 32
//! out_w = 32
//! filters = 64
//! pa_100 = 9
//! pa_99 = 8
//! eff_pw = 8.4              # optional effective per-group weight precision
//!
//! [[layers]]
//! type = "fc"
//! nin = 4096
//! nout = 1000
//! pw_100 = 10
//! pw_99 = 9
//! ```

mod builtin;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use builtin::{builtin_network, builtin_networks, BUILTIN_NAMES};

use crate::engines::{LayerKind, LayerShape, LayerSpec};
use crate::fixq::Precision;

#[derive(Debug, Error)]
pub enum NetspecError {
    #[error("{origin}: cannot read: {source}")]
    Io {
        origin: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}:{line}:{column}: parse error: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{origin}: validation error: {message}")]
    Validation { origin: String, message: String },
    #[error("unknown network '{0}'")]
    UnknownNetwork(String),
}

/// Accuracy target of a precision profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tier {
    /// No loss in top-1 accuracy.
    Full,
    /// 99% of baseline top-1 accuracy.
    Relaxed,
}

impl Tier {
    pub fn label(self) -> &'static str {
        match self {
            Tier::Full => "100",
            Tier::Relaxed => "99",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().trim_end_matches('%') {
            "100" => Ok(Tier::Full),
            "99" => Ok(Tier::Relaxed),
            other => Err(format!("tier must be 100 or 99, got '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TierPrecisions {
    pub full: Precision,
    pub relaxed: Precision,
}

impl TierPrecisions {
    pub fn get(&self, tier: Tier) -> Precision {
        match tier {
            Tier::Full => self.full,
            Tier::Relaxed => self.relaxed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkLayer {
    pub name: String,
    pub shape: LayerShape,
    /// Activation precisions for conv layers, weight precisions for fc.
    pub precisions: TierPrecisions,
    pub eff_pw: Option<f64>,
}

impl NetworkLayer {
    pub fn kind(&self) -> LayerKind {
        match self.shape {
            LayerShape::Conv { .. } => LayerKind::Conv,
            LayerShape::Fc { .. } => LayerKind::Fc,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    pub conv_pw: TierPrecisions,
    pub layers: Vec<NetworkLayer>,
}

impl NetworkSpec {
    /// Layers with the precisions of `tier` applied.
    pub fn layers(&self, tier: Tier) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|l| {
                let (pa, pw) = match l.kind() {
                    LayerKind::Conv => (l.precisions.get(tier), self.conv_pw.get(tier)),
                    LayerKind::Fc => (Precision::BASE, l.precisions.get(tier)),
                };
                LayerSpec {
                    name: l.name.clone(),
                    shape: l.shape,
                    pa,
                    pw,
                }
            })
            .collect()
    }

    /// Effective weight precision per layer, falling back to the profile
    /// precision where none is recorded.
    pub fn effective_weight_precisions(&self, tier: Tier) -> Vec<f64> {
        self.layers(tier)
            .iter()
            .zip(&self.layers)
            .map(|(spec, l)| l.eff_pw.unwrap_or(spec.pw.bits() as f64))
            .collect()
    }

    pub fn has_effective_precisions(&self) -> bool {
        self.layers.iter().any(|l| l.eff_pw.is_some())
    }

    pub fn count(&self, kind: LayerKind) -> usize {
        self.layers.iter().filter(|l| l.kind() == kind).count()
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, NetspecError> {
        let file: NetworkFile = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|span| line_col(text, span.start))
                .unwrap_or((0, 0));
            NetspecError::Parse {
                origin: origin.to_string(),
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        file.validate(origin)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&NetworkFile::from(self)).expect("network specs always serialize")
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkSpec, NetspecError> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| NetspecError::Io {
        origin: origin.clone(),
        source,
    })?;
    NetworkSpec::from_toml_str(&text, &origin)
}

/// A builtin name (case-insensitive) or a path to a network file.
pub fn resolve_network(name_or_path: &str) -> Result<NetworkSpec, NetspecError> {
    if let Some(net) = builtin_network(name_or_path) {
        return Ok(net);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        load_network(path)
    } else {
        Err(NetspecError::UnknownNetwork(name_or_path.to_string()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    name: String,
    conv_pw_100: u8,
    conv_pw_99: u8,
    layers: Vec<LayerEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum LayerEntry {
    Conv {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        cin: u64,
        kx: u64,
        ky: u64,
        out_h: u64,
        out_w: u64,
        filters: u64,
        pa_100: u8,
        pa_99: u8,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eff_pw: Option<f64>,
    },
    Fc {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        nin: u64,
        nout: u64,
        pw_100: u8,
        pw_99: u8,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eff_pw: Option<f64>,
    },
}

impl NetworkFile {
    fn validate(self, origin: &str) -> Result<NetworkSpec, NetspecError> {
        let fail = |message: String| NetspecError::Validation {
            origin: origin.to_string(),
            message,
        };
        let precision = |what: &str, bits: u8| {
            Precision::new(bits).map_err(|_| fail(format!("{what} = {bits} outside [1, 16]")))
        };
        if self.name.trim().is_empty() {
            return Err(fail("network name is empty".into()));
        }
        if self.layers.is_empty() {
            return Err(fail("network has no layers".into()));
        }
        let conv_pw = TierPrecisions {
            full: precision("conv_pw_100", self.conv_pw_100)?,
            relaxed: precision("conv_pw_99", self.conv_pw_99)?,
        };
        let mut layers = Vec::with_capacity(self.layers.len());
        let (mut convs, mut fcs) = (0, 0);
        for (i, entry) in self.layers.into_iter().enumerate() {
            let layer = match entry {
                LayerEntry::Conv {
                    name,
                    cin,
                    kx,
                    ky,
                    out_h,
                    out_w,
                    filters,
                    pa_100,
                    pa_99,
                    eff_pw,
                } => {
                    convs += 1;
                    let name = name.unwrap_or_else(|| format!("conv{convs}"));
                    let at = |field: &str| format!("layer {} ({name}): {field}", i + 1);
                    NetworkLayer {
                        shape: LayerShape::Conv {
                            cin,
                            kx,
                            ky,
                            out_h,
                            out_w,
                            filters,
                        },
                        precisions: TierPrecisions {
                            full: precision(&at("pa_100"), pa_100)?,
                            relaxed: precision(&at("pa_99"), pa_99)?,
                        },
                        eff_pw,
                        name,
                    }
                }
                LayerEntry::Fc {
                    name,
                    nin,
                    nout,
                    pw_100,
                    pw_99,
                    eff_pw,
                } => {
                    fcs += 1;
                    let name = name.unwrap_or_else(|| format!("fc{fcs}"));
                    let at = |field: &str| format!("layer {} ({name}): {field}", i + 1);
                    NetworkLayer {
                        shape: LayerShape::Fc {
                            inputs: nin,
                            outputs: nout,
                        },
                        precisions: TierPrecisions {
                            full: precision(&at("pw_100"), pw_100)?,
                            relaxed: precision(&at("pw_99"), pw_99)?,
                        },
                        eff_pw,
                        name,
                    }
                }
            };
            let probe = LayerSpec {
                name: layer.name.clone(),
                shape: layer.shape,
                pa: Precision::BASE,
                pw: Precision::BASE,
            };
            probe
                .validate()
                .map_err(|e| fail(format!("layer {}: {e}", i + 1)))?;
            if let Some(eff) = layer.eff_pw {
                if !(eff.is_finite() && eff > 0.0 && eff <= 16.0) {
                    return Err(fail(format!(
                        "layer {} ({}): eff_pw = {eff} outside (0, 16]",
                        i + 1,
                        layer.name
                    )));
                }
            }
            if layers.iter().any(|l: &NetworkLayer| l.name == layer.name) {
                return Err(fail(format!("duplicate layer name '{}'", layer.name)));
            }
            layers.push(layer);
        }
        Ok(NetworkSpec {
            name: self.name,
            conv_pw,
            layers,
        })
    }
}

impl From<&NetworkSpec> for NetworkFile {
    fn from(net: &NetworkSpec) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| match l.shape {
                LayerShape::Conv {
                    cin,
                    kx,
                    ky,
                    out_h,
                    out_w,
                    filters,
                } => LayerEntry::Conv {
                    name: Some(l.name.clone()),
                    cin,
                    kx,
                    ky,
                    out_h,
                    out_w,
                    filters,
                    pa_100: l.precisions.full.bits(),
                    pa_99: l.precisions.relaxed.bits(),
                    eff_pw: l.eff_pw,
                },
                LayerShape::Fc { inputs, outputs } => LayerEntry::Fc {
                    name: Some(l.name.clone()),
                    nin: inputs,
                    nout: outputs,
                    pw_100: l.precisions.full.bits(),
                    pw_99: l.precisions.relaxed.bits(),
                    eff_pw: l.eff_pw,
                },
            })
            .collect();
        NetworkFile {
            name: net.name.clone(),
            conv_pw_100: net.conv_pw.full.bits(),
            conv_pw_99: net.conv_pw.relaxed.bits(),
            layers,
        }
    }
}
