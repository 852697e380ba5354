//! Runtime precision detection and the linear-scaling speedup estimate.
//!
//! Activation groups are trimmed at runtime: an OR over each bit position of
//! the group followed by a leading-one detector gives the bits the group
//! actually needs. Weights can be trimmed per group offline; their average
//! effective precision feeds [`estimate_speedup_linear`].

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::bitpack::PackedStream;
use crate::engines::{
    dpnn_cycles, fc_plan, loom_conv_bricks, ActivationGroups, EngineError, EngineGeometry,
    GroupSource, LayerKind, LayerSpec,
};
use crate::fixq::{min_precision, Precision, Signedness};

/// Activations per detection group on the reference grid.
pub const ACTIVATION_GROUP_SIZE: usize = 256;
/// Weights per group for effective weight precisions.
pub const WEIGHT_GROUP_SIZE: usize = 16;

#[derive(Debug, Error)]
pub enum DynprecError {
    #[error("{layers} layers but {precisions} effective precisions")]
    LengthMismatch { layers: usize, precisions: usize },
    #[error("effective precision {value} for layer '{layer}' is outside (0, 16]")]
    InvalidPrecision { layer: String, value: f64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// OR tree plus leading-one detector over unsigned activations.
pub fn group_activation_precision(values: &[u16]) -> Precision {
    let or = values.iter().fold(0u16, |acc, &v| acc | v);
    let width = (16 - or.leading_zeros()).max(1);
    Precision::of(width as u8)
}

/// Signed groups take the widest two's complement width of any member; an
/// OR tree would misread negative values.
pub fn group_signed_activation_precision(values: &[i32]) -> Precision {
    min_precision(values, Signedness::Signed)
}

pub fn group_weight_precision(values: &[i32]) -> Precision {
    min_precision(values, Signedness::Signed)
}

/// Mean per-group weight precision over consecutive groups of
/// `group_size` weights.
pub fn effective_weight_precision(weights: &[i32], group_size: usize) -> Option<f64> {
    if weights.is_empty() || group_size == 0 {
        return None;
    }
    let groups = weights.chunks(group_size);
    let n = groups.len();
    let total: u64 = groups
        .map(|g| group_weight_precision(g).bits() as u64)
        .sum();
    Some(total as f64 / n as f64)
}

fn detect(values: &[i32], signedness: Signedness) -> Precision {
    match signedness {
        Signedness::Signed => group_signed_activation_precision(values),
        Signedness::Unsigned if values.iter().all(|&v| (0..=u16::MAX as i32).contains(&v)) => {
            let or = values.iter().fold(0i32, |acc, &v| acc | v) as u16;
            group_activation_precision(&[or])
        }
        Signedness::Unsigned => Precision::BASE,
    }
}

/// Detects per-group precisions over an im2col matrix (`windows` rows of
/// `reduction` values, window-major).
pub fn detect_groups(
    layer: &LayerSpec,
    values: &[i32],
    signedness: Signedness,
    windows_per_group: u64,
    reduction_lanes: u64,
) -> Result<ActivationGroups, EngineError> {
    let (w, r) = (layer.windows(), layer.reduction());
    if values.len() as u64 != w * r {
        return Err(EngineError::Data(format!(
            "layer '{}': {} activations, expected {w} windows x {r}",
            layer.name,
            values.len()
        )));
    }
    let (wg, rs) = ActivationGroups::grid_for(layer, windows_per_group, reduction_lanes);
    let mut precisions = Vec::with_capacity((wg * rs) as usize);
    let mut buf = Vec::new();
    for g in 0..wg {
        let w0 = g * windows_per_group;
        let w1 = (w0 + windows_per_group).min(w);
        for s in 0..rs {
            let r0 = s * reduction_lanes;
            let r1 = (r0 + reduction_lanes).min(r);
            buf.clear();
            for x in w0..w1 {
                buf.extend_from_slice(&values[(x * r + r0) as usize..(x * r + r1) as usize]);
            }
            precisions.push(detect(&buf, signedness));
        }
    }
    ActivationGroups::new(windows_per_group, reduction_lanes, wg, rs, precisions)
}

/// Loom speedup over the baseline with fractional weight precisions: cycles
/// scale linearly in `P_w` without rounding.
pub fn estimate_speedup_linear(
    layers: &[LayerSpec],
    effective_pw: &[f64],
    geo: &EngineGeometry,
) -> Result<f64, DynprecError> {
    if layers.len() != effective_pw.len() {
        return Err(DynprecError::LengthMismatch {
            layers: layers.len(),
            precisions: effective_pw.len(),
        });
    }
    let b = geo.bits_per_cycle() as u64;
    let (mut loom, mut base) = (0.0, 0.0);
    for (layer, &pw) in layers.iter().zip(effective_pw) {
        if !(pw > 0.0 && pw <= 16.0) {
            return Err(DynprecError::InvalidPrecision {
                layer: layer.name.clone(),
                value: pw,
            });
        }
        layer.validate()?;
        base += dpnn_cycles(layer, geo) as f64;
        loom += match layer.kind() {
            LayerKind::Conv => {
                let slices = (layer.pa.bits() as u64).div_ceil(b);
                (loom_conv_bricks(layer, geo) * slices) as f64 * pw
            }
            LayerKind::Fc => fc_plan(layer, geo, pw)?.cycles_linear(pw),
        };
    }
    Ok(base / loom)
}

/// Value distributions for synthetic activations of a layer with profile
/// precision `P_a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationDistribution {
    /// Uniform over `[0, 2^P_a - 1]`.
    Uniform,
    /// Uniform over `[0, 2^(P_a - 1) - 1]`; never uses the top bit.
    HalfRange,
    /// Rounded `N(0, sigma)` clipped to `[0, 2^P_a - 1]`, with
    /// `sigma = sigma_fraction * (2^P_a - 1)`. About half the values are zero,
    /// as after a ReLU.
    ClippedNormal { sigma_fraction: f64 },
}

impl ActivationDistribution {
    pub const DEFAULT_SIGMA_FRACTION: f64 = 0.25;

    /// `P(value <= m)` for a layer at precision `pa`.
    pub fn cdf(&self, pa: Precision, m: u64) -> f64 {
        let max = (1u64 << pa.bits()) - 1;
        if m >= max {
            return 1.0;
        }
        match *self {
            ActivationDistribution::Uniform => (m + 1) as f64 / (max + 1) as f64,
            ActivationDistribution::HalfRange => {
                let half = 1u64 << (pa.bits() - 1);
                ((m + 1) as f64 / half as f64).min(1.0)
            }
            ActivationDistribution::ClippedNormal { sigma_fraction } => {
                let sigma = (sigma_fraction * max as f64).max(f64::MIN_POSITIVE);
                let normal = Normal::new(0.0, sigma).expect("positive sigma");
                normal.cdf(m as f64 + 0.5)
            }
        }
    }

    /// Draws one value.
    pub fn sample_value<R: Rng>(&self, pa: Precision, rng: &mut R) -> u16 {
        let max = (1u64 << pa.bits()) - 1;
        match *self {
            ActivationDistribution::Uniform => rng.random_range(0..=max) as u16,
            ActivationDistribution::HalfRange => {
                if pa.bits() == 1 {
                    0
                } else {
                    rng.random_range(0..(1u64 << (pa.bits() - 1))) as u16
                }
            }
            ActivationDistribution::ClippedNormal { .. } => {
                // Inverse transform over the discrete CDF.
                let u: f64 = rng.random();
                let (mut lo, mut hi) = (0u64, max);
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    if self.cdf(pa, mid) >= u {
                        hi = mid;
                    } else {
                        lo = mid + 1;
                    }
                }
                lo as u16
            }
        }
    }

    /// Draws the detected precision of a group of `size` independent values
    /// directly from the distribution of the group maximum:
    /// `P(width <= k) = F(2^k - 1)^size`.
    pub fn sample_group_precision<R: Rng>(
        &self,
        pa: Precision,
        size: u64,
        rng: &mut R,
    ) -> Precision {
        let u: f64 = rng.random();
        for k in 1..pa.bits() {
            let below = self.cdf(pa, (1u64 << k) - 1).powf(size as f64);
            if u < below {
                return Precision::of(k);
            }
        }
        pa
    }
}

impl fmt::Display for ActivationDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationDistribution::Uniform => f.write_str("uniform"),
            ActivationDistribution::HalfRange => f.write_str("half-range"),
            ActivationDistribution::ClippedNormal { sigma_fraction } => {
                write!(f, "clipped-normal:{sigma_fraction}")
            }
        }
    }
}

impl FromStr for ActivationDistribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "uniform" => return Ok(ActivationDistribution::Uniform),
            "half-range" => return Ok(ActivationDistribution::HalfRange),
            "clipped-normal" => {
                return Ok(ActivationDistribution::ClippedNormal {
                    sigma_fraction: Self::DEFAULT_SIGMA_FRACTION,
                })
            }
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("clipped-normal:") {
            let sigma_fraction: f64 = rest
                .parse()
                .map_err(|_| format!("bad sigma fraction '{rest}'"))?;
            if !(sigma_fraction > 0.0 && sigma_fraction.is_finite()) {
                return Err(format!("sigma fraction must be positive, got {rest}"));
            }
            return Ok(ActivationDistribution::ClippedNormal { sigma_fraction });
        }
        Err(format!(
            "unknown distribution '{s}' (expected uniform, half-range or clipped-normal[:sigma])"
        ))
    }
}

/// Seeded synthetic activations. Each layer draws from its own stream, so
/// results do not depend on which layers are simulated or in what order.
#[derive(Debug, Clone)]
pub struct SyntheticActivations {
    pub network: String,
    pub seed: u64,
    pub distribution: ActivationDistribution,
}

impl SyntheticActivations {
    pub fn new(
        network: impl Into<String>,
        seed: u64,
        distribution: ActivationDistribution,
    ) -> Self {
        SyntheticActivations {
            network: network.into(),
            seed,
            distribution,
        }
    }

    /// Per-layer generator.
    pub fn layer_rng(&self, layer_index: usize) -> ChaCha8Rng {
        // FNV-1a over the network name, mixed with the seed and layer.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in self.network.bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        let mixed = h
            ^ self.seed.rotate_left(17)
            ^ (layer_index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        ChaCha8Rng::seed_from_u64(mixed)
    }
}

impl GroupSource for SyntheticActivations {
    fn groups(
        &self,
        layer_index: usize,
        layer: &LayerSpec,
        windows_per_group: u64,
        reduction_lanes: u64,
    ) -> Result<ActivationGroups, EngineError> {
        let mut rng = self.layer_rng(layer_index);
        let (wg, rs) = ActivationGroups::grid_for(layer, windows_per_group, reduction_lanes);
        let shape = ActivationGroups::uniform(layer, windows_per_group, reduction_lanes, layer.pa);
        let mut precisions = Vec::with_capacity((wg * rs) as usize);
        for g in 0..wg {
            for s in 0..rs {
                let size = shape.group_size(layer, g, s);
                precisions.push(
                    self.distribution
                        .sample_group_precision(layer.pa, size, &mut rng),
                );
            }
        }
        ActivationGroups::new(windows_per_group, reduction_lanes, wg, rs, precisions)
    }
}

/// Activations recorded on disk: `DIR/<network>/<layer>.lpk` holds the
/// packed im2col matrix of each layer, window-major.
#[derive(Debug, Clone)]
pub struct FileActivations {
    pub dir: PathBuf,
    pub network: String,
}

impl FileActivations {
    pub fn new(dir: impl Into<PathBuf>, network: impl Into<String>) -> Self {
        FileActivations {
            dir: dir.into(),
            network: network.into(),
        }
    }

    pub fn path_for(&self, layer: &LayerSpec) -> PathBuf {
        self.dir
            .join(&self.network)
            .join(format!("{}.lpk", layer.name))
    }
}

impl GroupSource for FileActivations {
    fn groups(
        &self,
        _layer_index: usize,
        layer: &LayerSpec,
        windows_per_group: u64,
        reduction_lanes: u64,
    ) -> Result<ActivationGroups, EngineError> {
        let path = self.path_for(layer);
        let bytes = std::fs::read(&path).map_err(|e| EngineError::MissingActivations {
            layer: layer.name.clone(),
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let stream =
            PackedStream::from_bytes(&bytes).map_err(|e| EngineError::MissingActivations {
                layer: layer.name.clone(),
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
        let tensor = crate::bitpack::unpack(&stream, stream.signedness())
            .map_err(|e| EngineError::Data(e.to_string()))?;
        detect_groups(
            layer,
            tensor.values(),
            tensor.signedness(),
            windows_per_group,
            reduction_lanes,
        )
    }
}
