use super::{EngineError, EngineGeometry, LayerKind, LayerShape, LayerSpec};
use crate::fixq::Precision;

fn expect_kind(layer: &LayerSpec, kind: LayerKind) -> Result<(), EngineError> {
    if layer.kind() == kind {
        Ok(())
    } else {
        Err(EngineError::WrongLayerKind {
            layer: layer.name.clone(),
            expected: kind,
        })
    }
}

/// Baseline cycles: one `N`-activation slice against `k` filters per cycle.
pub fn dpnn_cycles(layer: &LayerSpec, geo: &EngineGeometry) -> u64 {
    let filter_tiles = layer.outputs().div_ceil(geo.dpnn_filters());
    let slices = layer.reduction().div_ceil(geo.activation_lanes());
    filter_tiles * layer.windows() * slices
}

/// Bricks of the bit-serial grid: filter tiles x window groups x
/// reduction slices.
pub fn loom_conv_bricks(layer: &LayerSpec, geo: &EngineGeometry) -> u64 {
    layer.outputs().div_ceil(geo.filter_lanes())
        * layer.windows().div_ceil(geo.window_columns())
        * layer.reduction().div_ceil(geo.activation_lanes())
}

fn activation_slices(p: Precision, geo: &EngineGeometry) -> u64 {
    (p.bits() as u64).div_ceil(geo.bits_per_cycle() as u64)
}

/// Each brick runs `ceil(P_a / b)` activation slices for each of `P_w`
/// weight bits. Weight loads overlap with the previous bit's activations.
pub fn loom_conv_cycles(layer: &LayerSpec, geo: &EngineGeometry) -> Result<u64, EngineError> {
    expect_kind(layer, LayerKind::Conv)?;
    Ok(loom_conv_bricks(layer, geo) * activation_slices(layer.pa, geo) * layer.pw.bits() as u64)
}

/// Activation-serial reference: 16 windows x `k` filters, one activation
/// bit per cycle, bit-parallel weights. Fully-connected layers run as on the
/// baseline.
pub fn stripes_cycles(layer: &LayerSpec, geo: &EngineGeometry) -> u64 {
    match layer.kind() {
        LayerKind::Fc => dpnn_cycles(layer, geo),
        LayerKind::Conv => stripes_bricks(layer, geo) * layer.pa.bits() as u64,
    }
}

fn stripes_bricks(layer: &LayerSpec, geo: &EngineGeometry) -> u64 {
    layer.outputs().div_ceil(geo.dpnn_filters())
        * layer.windows().div_ceil(geo.stripes_windows())
        * layer.reduction().div_ceil(geo.activation_lanes())
}

/// Per-group activation precisions of one layer.
///
/// A group is the set of activations processed concurrently in one brick:
/// `windows_per_group` windows times `reduction_lanes` consecutive inputs.
/// Groups are stored window-group major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationGroups {
    windows_per_group: u64,
    reduction_lanes: u64,
    window_groups: u64,
    reduction_slices: u64,
    precisions: Vec<Precision>,
}

impl ActivationGroups {
    pub fn new(
        windows_per_group: u64,
        reduction_lanes: u64,
        window_groups: u64,
        reduction_slices: u64,
        precisions: Vec<Precision>,
    ) -> Result<Self, EngineError> {
        if precisions.len() as u64 != window_groups * reduction_slices {
            return Err(EngineError::Data(format!(
                "{} group precisions for a {window_groups} x {reduction_slices} grid",
                precisions.len()
            )));
        }
        Ok(ActivationGroups {
            windows_per_group,
            reduction_lanes,
            window_groups,
            reduction_slices,
            precisions,
        })
    }

    /// Grid dimensions for `layer` with the given group shape.
    pub fn grid_for(layer: &LayerSpec, windows_per_group: u64, reduction_lanes: u64) -> (u64, u64) {
        (
            layer.windows().div_ceil(windows_per_group),
            layer.reduction().div_ceil(reduction_lanes),
        )
    }

    /// Every group at the same precision.
    pub fn uniform(
        layer: &LayerSpec,
        windows_per_group: u64,
        reduction_lanes: u64,
        p: Precision,
    ) -> Self {
        let (wg, rs) = Self::grid_for(layer, windows_per_group, reduction_lanes);
        ActivationGroups {
            windows_per_group,
            reduction_lanes,
            window_groups: wg,
            reduction_slices: rs,
            precisions: vec![p; (wg * rs) as usize],
        }
    }

    pub fn windows_per_group(&self) -> u64 {
        self.windows_per_group
    }

    pub fn reduction_lanes(&self) -> u64 {
        self.reduction_lanes
    }

    pub fn precisions(&self) -> &[Precision] {
        &self.precisions
    }

    pub fn len(&self) -> usize {
        self.precisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.precisions.is_empty()
    }

    pub fn precision(&self, window_group: u64, slice: u64) -> Precision {
        self.precisions[(window_group * self.reduction_slices + slice) as usize]
    }

    /// Number of activations in group `(window_group, slice)`.
    pub fn group_size(&self, layer: &LayerSpec, window_group: u64, slice: u64) -> u64 {
        let w =
            (layer.windows() - window_group * self.windows_per_group).min(self.windows_per_group);
        let r = (layer.reduction() - slice * self.reduction_lanes).min(self.reduction_lanes);
        w * r
    }

    /// Count of groups at each precision; index 0 is unused.
    pub fn histogram(&self) -> [u64; 17] {
        let mut h = [0u64; 17];
        for p in &self.precisions {
            h[p.bits() as usize] += 1;
        }
        h
    }

    /// Sum over groups of `f(size, precision)`, precisions capped at `cap`.
    pub(crate) fn fold_groups(
        &self,
        layer: &LayerSpec,
        cap: Precision,
        mut f: impl FnMut(u64, Precision) -> u64,
    ) -> u64 {
        let mut total = 0;
        for wg in 0..self.window_groups {
            for s in 0..self.reduction_slices {
                let p = self.precision(wg, s).min(cap);
                total += f(self.group_size(layer, wg, s), p);
            }
        }
        total
    }

    pub fn check_covers(
        &self,
        layer: &LayerSpec,
        windows_per_group: u64,
        reduction_lanes: u64,
    ) -> Result<(), EngineError> {
        let missing = |reason: String| {
            Err(EngineError::MissingGroups {
                layer: layer.name.clone(),
                reason,
            })
        };
        if self.windows_per_group != windows_per_group || self.reduction_lanes != reduction_lanes {
            return missing(format!(
                "groups of {}x{} activations, engine needs {}x{}",
                self.windows_per_group, self.reduction_lanes, windows_per_group, reduction_lanes
            ));
        }
        let (wg, rs) = Self::grid_for(layer, windows_per_group, reduction_lanes);
        if (self.window_groups, self.reduction_slices) != (wg, rs) {
            return missing(format!(
                "{}x{} groups supplied, layer needs {wg}x{rs}",
                self.window_groups, self.reduction_slices
            ));
        }
        Ok(())
    }
}

/// Stripes with per-group dynamic activation precisions. Detected
/// precisions never exceed the layer profile.
pub fn dstripes_cycles(
    layer: &LayerSpec,
    geo: &EngineGeometry,
    groups: &ActivationGroups,
) -> Result<u64, EngineError> {
    if layer.kind() == LayerKind::Fc {
        return Ok(dpnn_cycles(layer, geo));
    }
    groups.check_covers(layer, geo.stripes_windows(), geo.activation_lanes())?;
    let filter_tiles = layer.outputs().div_ceil(geo.dpnn_filters());
    Ok(filter_tiles * groups.fold_groups(layer, layer.pa, |_, p| p.bits() as u64))
}

/// Bit-serial grid convolution with per-group dynamic activation
/// precisions, rounded up to whole `b`-bit slices.
pub fn loom_dynamic_conv_cycles(
    layer: &LayerSpec,
    geo: &EngineGeometry,
    groups: &ActivationGroups,
) -> Result<u64, EngineError> {
    expect_kind(layer, LayerKind::Conv)?;
    groups.check_covers(layer, geo.window_columns(), geo.activation_lanes())?;
    let filter_tiles = layer.outputs().div_ceil(geo.filter_lanes());
    let slices = groups.fold_groups(layer, layer.pa, |_, p| activation_slices(p, geo));
    Ok(filter_tiles * slices * layer.pw.bits() as u64)
}

/// A run of identical output batches in a fully-connected layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FcBatch {
    /// How many batches share this shape.
    pub repeat: u64,
    pub outputs: u64,
    /// SIPs each output is sliced over; 1 means no cascading.
    pub slices: u64,
    /// 16-input chunks each SIP processes.
    pub rounds: u64,
}

/// Schedule of a fully-connected layer on the grid. Outputs are assigned one
/// per SIP in batches of `sip_count`; a batch with fewer outputs slices each
/// inner product over a chain of SIPs and pays one reduction cycle per slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FcPlan {
    pub batches: Vec<FcBatch>,
    pub cycles_per_weight_bit: u64,
    /// Column stagger before the grid is fully busy, per batch.
    pub fill_per_batch: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FcCycles {
    pub steady: u64,
    pub fill: u64,
    pub cascade: u64,
}

impl FcCycles {
    pub fn total(&self) -> u64 {
        self.steady + self.fill + self.cascade
    }
}

impl FcPlan {
    pub fn breakdown(&self, pw: Precision) -> FcCycles {
        let mut c = FcCycles::default();
        for b in &self.batches {
            c.steady += b.repeat * b.rounds * pw.bits() as u64 * self.cycles_per_weight_bit;
            c.fill += b.repeat * self.fill_per_batch;
            c.cascade += b.repeat * cascade_cost(b.slices);
        }
        c
    }

    /// Cycles with a possibly fractional weight precision (linear scaling).
    pub fn cycles_linear(&self, pw: f64) -> f64 {
        self.batches
            .iter()
            .map(|b| {
                b.repeat as f64
                    * (b.rounds as f64 * pw * self.cycles_per_weight_bit as f64
                        + self.fill_per_batch as f64
                        + cascade_cost(b.slices) as f64)
            })
            .sum()
    }
}

fn cascade_cost(slices: u64) -> u64 {
    if slices > 1 {
        slices
    } else {
        0
    }
}

/// Slice count minimising `rounds * cost_per_round + reduction`, among the
/// slicings that fit `max_slices` SIPs per output.
fn choose_slices(chunks: u64, max_slices: u64, cost_per_round: f64) -> (u64, u64) {
    (1..=max_slices.max(1))
        .map(|s| (s, chunks.div_ceil(s)))
        .min_by(|a, b| {
            let cost = |(s, r): (u64, u64)| r as f64 * cost_per_round + cascade_cost(s) as f64;
            cost(*a).total_cmp(&cost(*b)).then(a.0.cmp(&b.0))
        })
        .unwrap_or((1, chunks))
}

/// Plans a fully-connected layer; `pw` steers the cascading choice.
pub fn fc_plan(layer: &LayerSpec, geo: &EngineGeometry, pw: f64) -> Result<FcPlan, EngineError> {
    expect_kind(layer, LayerKind::Fc)?;
    let LayerShape::Fc { inputs, outputs } = layer.shape else {
        unreachable!()
    };
    let sips = geo.sip_count();
    let chunks = inputs.div_ceil(geo.activation_lanes());
    let per_bit = geo.fc_cycles_per_weight_bit();
    let mut batches = Vec::new();
    let full = outputs / sips;
    if full > 0 {
        batches.push(FcBatch {
            repeat: full,
            outputs: sips,
            slices: 1,
            rounds: chunks,
        });
    }
    let rest = outputs % sips;
    if let Some(fit) = sips.checked_div(rest) {
        let max_slices = fit.min(chunks);
        let (slices, rounds) = choose_slices(chunks, max_slices, pw * per_bit as f64);
        batches.push(FcBatch {
            repeat: 1,
            outputs: rest,
            slices,
            rounds,
        });
    }
    Ok(FcPlan {
        batches,
        cycles_per_weight_bit: per_bit,
        fill_per_batch: geo.window_columns() - 1,
    })
}

/// Each column holds a weight bit for `16 / b` cycles while the other
/// columns load theirs, so a 16-input chunk costs `P_w * 16 / b` cycles.
pub fn loom_fc_cycles(layer: &LayerSpec, geo: &EngineGeometry) -> Result<FcCycles, EngineError> {
    Ok(fc_plan(layer, geo, layer.pw.bits() as f64)?.breakdown(layer.pw))
}
