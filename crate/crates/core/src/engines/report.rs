use serde::Serialize;

use super::cycles::{self, ActivationGroups};
use super::{Engine, EngineError, EngineGeometry, LayerKind, LayerSpec};
use crate::fixq::Precision;
use crate::netspec::{NetworkSpec, Tier};

/// Supplies per-group activation precisions for dynamic engines.
pub trait GroupSource: Sync {
    fn groups(
        &self,
        layer_index: usize,
        layer: &LayerSpec,
        windows_per_group: u64,
        reduction_lanes: u64,
    ) -> Result<ActivationGroups, EngineError>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCycles {
    pub index: usize,
    pub name: String,
    pub kind: LayerKind,
    pub cycles: u64,
    pub dpnn_cycles: u64,
    /// Useful work over peak work during the layer, in `[0, 1]`.
    pub utilization: f64,
    pub weight_bits: u64,
    pub activation_bits: u64,
}

impl LayerCycles {
    pub fn speedup(&self) -> f64 {
        self.dpnn_cycles as f64 / self.cycles as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleReport {
    pub network: String,
    #[serde(serialize_with = "serialize_engine")]
    pub engine: Engine,
    pub geometry: EngineGeometry,
    pub layers: Vec<LayerCycles>,
}

fn serialize_engine<S: serde::Serializer>(e: &Engine, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(e.name())
}

impl CycleReport {
    fn sums(&self, kind: Option<LayerKind>) -> Option<(u64, u64)> {
        let mut any = false;
        let (mut cycles, mut base) = (0, 0);
        for l in self
            .layers
            .iter()
            .filter(|l| kind.is_none_or(|k| l.kind == k))
        {
            any = true;
            cycles += l.cycles;
            base += l.dpnn_cycles;
        }
        any.then_some((cycles, base))
    }

    pub fn total_cycles(&self) -> u64 {
        self.sums(None).map_or(0, |s| s.0)
    }

    pub fn dpnn_total_cycles(&self) -> u64 {
        self.sums(None).map_or(0, |s| s.1)
    }

    /// `(engine cycles, baseline cycles)` summed over layers of `kind`.
    pub fn kind_cycles(&self, kind: LayerKind) -> Option<(u64, u64)> {
        self.sums(Some(kind))
    }

    pub fn speedup(&self) -> f64 {
        self.dpnn_total_cycles() as f64 / self.total_cycles() as f64
    }

    pub fn kind_speedup(&self, kind: LayerKind) -> Option<f64> {
        self.kind_cycles(kind).map(|(c, b)| b as f64 / c as f64)
    }
}

/// Geometric mean; `None` for an empty slice or non-positive input.
pub fn geomean(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| v.is_nan() || *v <= 0.0) {
        return None;
    }
    Some((values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp())
}

pub fn simulate_network(
    net: &NetworkSpec,
    engine: Engine,
    geo: &EngineGeometry,
    tier: Tier,
    dynamic: Option<&dyn GroupSource>,
) -> Result<CycleReport, EngineError> {
    simulate_layers(&net.name, &net.layers(tier), engine, geo, dynamic)
}

/// Cycle counts for every layer. `DStripes` needs a group source; `Loom`
/// uses one for convolutions when given and the static profile otherwise.
pub fn simulate_layers(
    network: &str,
    layers: &[LayerSpec],
    engine: Engine,
    geo: &EngineGeometry,
    dynamic: Option<&dyn GroupSource>,
) -> Result<CycleReport, EngineError> {
    let layers = layers
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            layer.validate()?;
            simulate_layer(i, layer, engine, geo, dynamic)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CycleReport {
        network: network.to_string(),
        engine,
        geometry: *geo,
        layers,
    })
}

fn simulate_layer(
    index: usize,
    layer: &LayerSpec,
    engine: Engine,
    geo: &EngineGeometry,
    dynamic: Option<&dyn GroupSource>,
) -> Result<LayerCycles, EngineError> {
    let base = geo.base_precision() as u64;
    let (r, w, f) = (layer.reduction(), layer.windows(), layer.outputs());
    let macs = layer.macs() as f64;
    let dpnn = cycles::dpnn_cycles(layer, geo);
    let lanes = geo.activation_lanes() as f64;
    let pa = layer.pa.bits() as u64;
    let pw = layer.pw.bits() as u64;
    let b = geo.bits_per_cycle() as u64;
    let dpnn_util = |c: u64| macs / (c as f64 * geo.peak_macs() as f64);
    let fetch = |windows_per_group: u64| -> Result<ActivationGroups, EngineError> {
        let source = dynamic.ok_or_else(|| EngineError::MissingGroups {
            layer: layer.name.clone(),
            reason: "no activation group source configured".into(),
        })?;
        source.groups(index, layer, windows_per_group, geo.activation_lanes())
    };

    let (cycles, utilization, weight_bits, activation_bits) = match (engine, layer.kind()) {
        (Engine::Dpnn, _) | (Engine::Stripes | Engine::DStripes, LayerKind::Fc) => {
            (dpnn, dpnn_util(dpnn), r * f * base, w * r * base)
        }
        (Engine::Stripes, LayerKind::Conv) => {
            let c = cycles::stripes_cycles(layer, geo);
            let util =
                macs * pa as f64 / (c as f64 * geo.dpnn_filters() as f64 * lanes * base as f64);
            (c, util, r * f * base, w * r * pa)
        }
        (Engine::DStripes, LayerKind::Conv) => {
            let groups = fetch(geo.stripes_windows())?;
            let c = cycles::dstripes_cycles(layer, geo, &groups)?;
            let bits = groups.fold_groups(layer, layer.pa, |size, p| size * p.bits() as u64);
            let util =
                (bits * f) as f64 / (c as f64 * geo.dpnn_filters() as f64 * lanes * base as f64);
            (c, util, r * f * base, bits)
        }
        (Engine::Loom, LayerKind::Conv) => {
            let peak =
                |c: u64| c as f64 * geo.filter_lanes() as f64 * geo.window_columns() as f64 * lanes;
            match dynamic {
                Some(_) => {
                    let groups = fetch(geo.window_columns())?;
                    let c = cycles::loom_dynamic_conv_cycles(layer, geo, &groups)?;
                    let slots =
                        groups.fold_groups(layer, layer.pa, |size, p| size * slice_count(p, b));
                    let bits =
                        groups.fold_groups(layer, layer.pa, |size, p| size * p.bits() as u64);
                    let util = (slots * f * pw) as f64 / peak(c);
                    (c, util, r * f * pw, bits)
                }
                None => {
                    let c = cycles::loom_conv_cycles(layer, geo)?;
                    let util = macs * (slice_count(layer.pa, b) * pw) as f64 / peak(c);
                    (c, util, r * f * pw, w * r * pa)
                }
            }
        }
        (Engine::Loom, LayerKind::Fc) => {
            let c = cycles::loom_fc_cycles(layer, geo)?.total();
            let util = macs * (pw * geo.fc_cycles_per_weight_bit()) as f64
                / (c as f64 * geo.sip_count() as f64 * lanes);
            (c, util, r * f * pw, r * base)
        }
    };
    Ok(LayerCycles {
        index,
        name: layer.name.clone(),
        kind: layer.kind(),
        cycles,
        dpnn_cycles: dpnn,
        utilization,
        weight_bits,
        activation_bits,
    })
}

fn slice_count(p: Precision, b: u64) -> u64 {
    (p.bits() as u64).div_ceil(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(b: u8) -> Precision {
        Precision::of(b)
    }

    fn layers() -> Vec<LayerSpec> {
        vec![
            LayerSpec::conv("aligned", 16, 1, 4, 128, p(8), p(11)),
            LayerSpec::conv("ragged", 3, 3, 13, 96, p(9), p(11)),
            LayerSpec::fc("fc", 4096, 1000, p(9)),
        ]
    }

    struct Fixed(u8);

    impl GroupSource for Fixed {
        fn groups(
            &self,
            _: usize,
            layer: &LayerSpec,
            wpg: u64,
            lanes: u64,
        ) -> Result<ActivationGroups, EngineError> {
            Ok(ActivationGroups::uniform(layer, wpg, lanes, p(self.0)))
        }
    }

    #[test]
    fn baseline_is_unit_speedup() {
        let geo = EngineGeometry::reference();
        let r = simulate_layers("t", &layers(), Engine::Dpnn, &geo, None).unwrap();
        assert_eq!(r.speedup(), 1.0);
        assert_eq!(r.layers[2].weight_bits, 4096 * 1000 * 16);
        assert!((r.layers[0].utilization - 1.0).abs() < 1e-12);
    }

    #[test]
    fn utilization_bounds() {
        let geo = EngineGeometry::reference();
        for engine in Engine::ALL {
            let r = simulate_layers("t", &layers(), engine, &geo, Some(&Fixed(5))).unwrap();
            for l in &r.layers {
                assert!(
                    l.utilization > 0.0 && l.utilization <= 1.0 + 1e-12,
                    "{engine} {l:?}"
                );
            }
        }
        let loom = simulate_layers("t", &layers(), Engine::Loom, &geo, None).unwrap();
        assert!((loom.layers[0].utilization - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dstripes_requires_groups() {
        let geo = EngineGeometry::reference();
        let err = simulate_layers("t", &layers(), Engine::DStripes, &geo, None).unwrap_err();
        assert!(matches!(err, EngineError::MissingGroups { .. }));
    }

    #[test]
    fn dynamic_never_slower_than_static() {
        let geo = EngineGeometry::reference();
        let engine = Engine::Loom;
        let stat = simulate_layers("t", &layers(), engine, &geo, None).unwrap();
        let dynamic = simulate_layers("t", &layers(), engine, &geo, Some(&Fixed(16))).unwrap();
        assert_eq!(stat.total_cycles(), dynamic.total_cycles());
        let fewer = simulate_layers("t", &layers(), engine, &geo, Some(&Fixed(3))).unwrap();
        assert!(fewer.total_cycles() < stat.total_cycles());
        let stripes = simulate_layers("t", &layers(), Engine::Stripes, &geo, None).unwrap();
        let capped =
            simulate_layers("t", &layers(), Engine::DStripes, &geo, Some(&Fixed(16))).unwrap();
        assert_eq!(stripes.total_cycles(), capped.total_cycles());
    }

    #[test]
    fn kind_aggregates() {
        let geo = EngineGeometry::reference();
        let r = simulate_layers("t", &layers(), Engine::Loom, &geo, None).unwrap();
        let (cc, cb) = r.kind_cycles(LayerKind::Conv).unwrap();
        let (fc, fb) = r.kind_cycles(LayerKind::Fc).unwrap();
        assert_eq!(cc + fc, r.total_cycles());
        assert_eq!(cb + fb, r.dpnn_total_cycles());
        let only_conv = simulate_layers("t", &layers()[..2], Engine::Loom, &geo, None).unwrap();
        assert_eq!(only_conv.kind_speedup(LayerKind::Fc), None);
    }

    #[test]
    fn geomean_basics() {
        assert_eq!(geomean(&[]), None);
        assert!((geomean(&[2.0, 8.0]).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(geomean(&[1.0, 0.0]), None);
    }
}
