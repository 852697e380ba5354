use std::fmt;

use serde::Serialize;

use super::EngineError;
use crate::fixq::Precision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Fc,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Conv => "conv",
            LayerKind::Fc => "fc",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerShape {
    Conv {
        cin: u64,
        kx: u64,
        ky: u64,
        out_h: u64,
        out_w: u64,
        filters: u64,
    },
    Fc {
        inputs: u64,
        outputs: u64,
    },
}

/// One layer with its resolved activation and weight precisions.
///
/// For fully-connected layers `pa` is informational; activations enter the
/// array at the baseline width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub shape: LayerShape,
    pub pa: Precision,
    pub pw: Precision,
}

impl LayerSpec {
    pub fn conv(
        name: impl Into<String>,
        cin: u64,
        k: u64,
        out: u64,
        filters: u64,
        pa: Precision,
        pw: Precision,
    ) -> Self {
        LayerSpec {
            name: name.into(),
            shape: LayerShape::Conv {
                cin,
                kx: k,
                ky: k,
                out_h: out,
                out_w: out,
                filters,
            },
            pa,
            pw,
        }
    }

    pub fn fc(name: impl Into<String>, inputs: u64, outputs: u64, pw: Precision) -> Self {
        LayerSpec {
            name: name.into(),
            shape: LayerShape::Fc { inputs, outputs },
            pa: Precision::BASE,
            pw,
        }
    }

    pub fn kind(&self) -> LayerKind {
        match self.shape {
            LayerShape::Conv { .. } => LayerKind::Conv,
            LayerShape::Fc { .. } => LayerKind::Fc,
        }
    }

    /// Inner-product length.
    pub fn reduction(&self) -> u64 {
        match self.shape {
            LayerShape::Conv { cin, kx, ky, .. } => cin * kx * ky,
            LayerShape::Fc { inputs, .. } => inputs,
        }
    }

    /// Output positions; one for fully-connected layers.
    pub fn windows(&self) -> u64 {
        match self.shape {
            LayerShape::Conv { out_h, out_w, .. } => out_h * out_w,
            LayerShape::Fc { .. } => 1,
        }
    }

    /// Filters (conv) or output neurons (fc).
    pub fn outputs(&self) -> u64 {
        match self.shape {
            LayerShape::Conv { filters, .. } => filters,
            LayerShape::Fc { outputs, .. } => outputs,
        }
    }

    pub fn macs(&self) -> u64 {
        self.reduction() * self.windows() * self.outputs()
    }

    pub fn weight_count(&self) -> u64 {
        self.reduction() * self.outputs()
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let dims: &[u64] = match &self.shape {
            LayerShape::Conv {
                cin,
                kx,
                ky,
                out_h,
                out_w,
                filters,
            } => &[*cin, *kx, *ky, *out_h, *out_w, *filters],
            LayerShape::Fc { inputs, outputs } => &[*inputs, *outputs],
        };
        if dims.contains(&0) {
            return Err(EngineError::InvalidLayer {
                layer: self.name.clone(),
                reason: "all dimensions must be at least 1".into(),
            });
        }
        Ok(())
    }
}
