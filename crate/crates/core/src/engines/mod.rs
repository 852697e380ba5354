//! Cycle models for the accelerators under comparison.
//!
//! * `Dpnn`: bit-parallel baseline. Every cycle it multiplies `N` activations
//!   against `N` weights of each of `k = peak_macs / N` filters.
//! * `Loom`: a `filter_lanes x window_columns` grid of serial inner-product
//!   units. Convolutions take `ceil(P_a / b) * P_w` cycles per brick;
//!   fully-connected layers take `P_w * 16 / b` cycles per 16-input chunk,
//!   staggered across columns.
//! * `Stripes` / `DStripes`: bit-serial in activations only (static or
//!   per-group dynamic precisions), bit-parallel for fully-connected layers.
//!
//! Closed-form counts live in [`cycles`]; [`grid`] runs the same schedules
//! on functional SIP models and is used to cross-check them.

mod cycles;
mod geometry;
pub mod grid;
mod layer;
mod report;

use thiserror::Error;

pub use cycles::{
    dpnn_cycles, dstripes_cycles, fc_plan, loom_conv_bricks, loom_conv_cycles,
    loom_dynamic_conv_cycles, loom_fc_cycles, stripes_cycles, ActivationGroups, FcBatch, FcCycles,
    FcPlan,
};
pub use geometry::EngineGeometry;
pub use layer::{LayerKind, LayerShape, LayerSpec};
pub use report::{
    geomean, simulate_layers, simulate_network, CycleReport, GroupSource, LayerCycles,
};

use crate::sip::SipError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Engine {
    Dpnn,
    DStripes,
    Loom,
    Stripes,
}

impl Engine {
    pub const ALL: [Engine; 4] = [
        Engine::Dpnn,
        Engine::DStripes,
        Engine::Loom,
        Engine::Stripes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Engine::Dpnn => "dpnn",
            Engine::DStripes => "dstripes",
            Engine::Loom => "loom",
            Engine::Stripes => "stripes",
        }
    }
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Engine {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Engine::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| EngineError::UnknownEngine(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("layer '{layer}' is not a {expected} layer")]
    WrongLayerKind { layer: String, expected: LayerKind },
    #[error("activation groups for layer '{layer}' do not cover it: {reason}")]
    MissingGroups { layer: String, reason: String },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid layer '{layer}': {reason}")]
    InvalidLayer { layer: String, reason: String },
    #[error("unknown engine '{0}'")]
    UnknownEngine(String),
    #[error(transparent)]
    Sip(#[from] SipError),
    #[error("no activations for layer '{layer}' at {path}: {reason}")]
    MissingActivations {
        layer: String,
        path: String,
        reason: String,
    },
    #[error("{0}")]
    Data(String),
}
