use loom_core::engines::{
    dstripes_cycles, geomean, loom_conv_cycles, loom_dynamic_conv_cycles, simulate_network,
    stripes_cycles, CycleReport, Engine, LayerKind,
};
use loom_core::netspec::NetworkSpec;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CliError, Config};
use crate::output::{write_plain, write_report};
use crate::CommonOutput;

#[derive(Debug, Serialize)]
struct SimRow {
    network: String,
    layer: String,
    kind: String,
    engine: &'static str,
    cycles: Option<u64>,
    speedup_vs_dpnn: f64,
    utilization: Option<f64>,
    weight_bits: Option<u64>,
    activation_bits: Option<u64>,
}

const AGGREGATES: [(&str, &str, Option<LayerKind>); 3] = [
    ("TOTAL", "all", None),
    ("CONV", "conv", Some(LayerKind::Conv)),
    ("FC", "fc", Some(LayerKind::Fc)),
];

/// One report per (network, engine), in network-then-engine order.
fn run_all(cfg: &Config, peak_macs: u64) -> Result<Vec<CycleReport>, CliError> {
    let geo = cfg.geometry(peak_macs)?;
    let jobs: Vec<(&NetworkSpec, Engine)> = cfg
        .networks
        .iter()
        .flat_map(|n| cfg.engines.iter().map(move |&e| (n, e)))
        .collect();
    jobs.par_iter()
        .map(|&(net, engine)| {
            let source = cfg.dynamic.source(&net.name);
            Ok(simulate_network(
                net,
                engine,
                &geo,
                cfg.tier,
                source.as_deref(),
            )?)
        })
        .collect()
}

struct Aggregate {
    cycles: u64,
    dpnn: u64,
    utilization: f64,
    weight_bits: u64,
    activation_bits: u64,
}

fn aggregate(report: &CycleReport, kind: Option<LayerKind>) -> Option<Aggregate> {
    let layers: Vec<_> = report
        .layers
        .iter()
        .filter(|l| kind.is_none_or(|k| l.kind == k))
        .collect();
    if layers.is_empty() {
        return None;
    }
    let cycles: u64 = layers.iter().map(|l| l.cycles).sum();
    let busy: f64 = layers.iter().map(|l| l.utilization * l.cycles as f64).sum();
    Some(Aggregate {
        cycles,
        dpnn: layers.iter().map(|l| l.dpnn_cycles).sum(),
        utilization: busy / cycles as f64,
        weight_bits: layers.iter().map(|l| l.weight_bits).sum(),
        activation_bits: layers.iter().map(|l| l.activation_bits).sum(),
    })
}

fn geomean_rows<'a>(
    reports: &'a [CycleReport],
    engines: &[Engine],
) -> impl Iterator<Item = (&'static str, &'static str, Engine, f64)> + 'a {
    let engines = engines.to_vec();
    AGGREGATES
        .iter()
        .flat_map(move |&(label, kind_name, kind)| {
            let engines = engines.clone();
            engines.into_iter().filter_map(move |engine| {
                let speedups: Vec<f64> = reports
                    .iter()
                    .filter(|r| r.engine == engine)
                    .filter_map(|r| aggregate(r, kind).map(|a| a.dpnn as f64 / a.cycles as f64))
                    .collect();
                geomean(&speedups).map(|g| (label, kind_name, engine, g))
            })
        })
}

pub fn simulate(cfg: &Config) -> Result<(), CliError> {
    let reports = run_all(cfg, cfg.peak_macs[0])?;
    let mut rows = Vec::new();
    for net_reports in reports.chunks(cfg.engines.len()) {
        let network = &net_reports[0].network;
        for i in 0..net_reports[0].layers.len() {
            for r in net_reports {
                let l = &r.layers[i];
                rows.push(SimRow {
                    network: network.clone(),
                    layer: l.name.clone(),
                    kind: l.kind.to_string(),
                    engine: r.engine.name(),
                    cycles: Some(l.cycles),
                    speedup_vs_dpnn: l.speedup(),
                    utilization: Some(l.utilization),
                    weight_bits: Some(l.weight_bits),
                    activation_bits: Some(l.activation_bits),
                });
            }
        }
        for (label, kind_name, kind) in AGGREGATES {
            for r in net_reports {
                if let Some(a) = aggregate(r, kind) {
                    rows.push(SimRow {
                        network: network.clone(),
                        layer: label.to_string(),
                        kind: kind_name.to_string(),
                        engine: r.engine.name(),
                        cycles: Some(a.cycles),
                        speedup_vs_dpnn: a.dpnn as f64 / a.cycles as f64,
                        utilization: Some(a.utilization),
                        weight_bits: Some(a.weight_bits),
                        activation_bits: Some(a.activation_bits),
                    });
                }
            }
        }
    }
    for (label, kind_name, engine, g) in geomean_rows(&reports, &cfg.engines) {
        rows.push(SimRow {
            network: "GEOMEAN".into(),
            layer: label.into(),
            kind: kind_name.into(),
            engine: engine.name(),
            cycles: None,
            speedup_vs_dpnn: g,
            utilization: None,
            weight_bits: None,
            activation_bits: None,
        });
    }
    write_report(cfg, "simulate", &rows)
}

#[derive(Debug, Serialize)]
struct FootprintRow {
    network: String,
    layer: String,
    kind: String,
    engine: &'static str,
    weight_bits: u64,
    activation_bits: u64,
    baseline_weight_bits: u64,
    baseline_activation_bits: u64,
    weight_saving: f64,
    activation_saving: f64,
}

impl FootprintRow {
    #[allow(clippy::too_many_arguments)]
    fn new(
        network: &str,
        layer: &str,
        kind: &str,
        engine: Engine,
        w: u64,
        a: u64,
        bw: u64,
        ba: u64,
    ) -> Self {
        FootprintRow {
            network: network.to_string(),
            layer: layer.to_string(),
            kind: kind.to_string(),
            engine: engine.name(),
            weight_bits: w,
            activation_bits: a,
            baseline_weight_bits: bw,
            baseline_activation_bits: ba,
            weight_saving: 1.0 - w as f64 / bw as f64,
            activation_saving: 1.0 - a as f64 / ba as f64,
        }
    }
}

pub fn footprint(cfg: &Config) -> Result<(), CliError> {
    let reports = run_all(cfg, cfg.peak_macs[0])?;
    let mut rows = Vec::new();
    for (net, net_reports) in cfg.networks.iter().zip(reports.chunks(cfg.engines.len())) {
        let network = &net.name;
        // Baseline traffic: every value at 16 bits.
        let base: Vec<(u64, u64)> = net
            .layers(cfg.tier)
            .iter()
            .map(|l| (l.weight_count() * 16, l.windows() * l.reduction() * 16))
            .collect();
        for (i, &(bw, ba)) in base.iter().enumerate() {
            for r in net_reports {
                let l = &r.layers[i];
                rows.push(FootprintRow::new(
                    network,
                    &l.name,
                    &l.kind.to_string(),
                    r.engine,
                    l.weight_bits,
                    l.activation_bits,
                    bw,
                    ba,
                ));
            }
        }
        for r in net_reports {
            let w: u64 = r.layers.iter().map(|l| l.weight_bits).sum();
            let a: u64 = r.layers.iter().map(|l| l.activation_bits).sum();
            let bw: u64 = base.iter().map(|b| b.0).sum();
            let ba: u64 = base.iter().map(|b| b.1).sum();
            rows.push(FootprintRow::new(
                network, "TOTAL", "all", r.engine, w, a, bw, ba,
            ));
        }
    }
    write_report(cfg, "footprint", &rows)
}

#[derive(Debug, Serialize)]
struct SweepRow {
    network: String,
    engine: &'static str,
    peak_macs: u64,
    bits: u8,
    conv_speedup: Option<f64>,
    fc_speedup: Option<f64>,
    total_speedup: f64,
}

pub fn sweep(cfg: &Config) -> Result<(), CliError> {
    let mut points = Vec::new();
    for &m in &cfg.peak_macs {
        points.push((m, run_all(cfg, m)?));
    }
    let mut rows = Vec::new();
    for (ni, net) in cfg.networks.iter().enumerate() {
        for (ei, engine) in cfg.engines.iter().enumerate() {
            for (m, reports) in &points {
                let r = &reports[ni * cfg.engines.len() + ei];
                rows.push(SweepRow {
                    network: net.name.clone(),
                    engine: engine.name(),
                    peak_macs: *m,
                    bits: cfg.bits,
                    conv_speedup: r.kind_speedup(LayerKind::Conv),
                    fc_speedup: r.kind_speedup(LayerKind::Fc),
                    total_speedup: r.speedup(),
                });
            }
        }
    }
    for engine in &cfg.engines {
        for (m, reports) in &points {
            let of = |f: &dyn Fn(&CycleReport) -> Option<f64>| {
                let v: Vec<f64> = reports
                    .iter()
                    .filter(|r| r.engine == *engine)
                    .filter_map(f)
                    .collect();
                geomean(&v)
            };
            rows.push(SweepRow {
                network: "GEOMEAN".into(),
                engine: engine.name(),
                peak_macs: *m,
                bits: cfg.bits,
                conv_speedup: of(&|r| r.kind_speedup(LayerKind::Conv)),
                fc_speedup: of(&|r| r.kind_speedup(LayerKind::Fc)),
                total_speedup: of(&|r| Some(r.speedup())).unwrap_or(f64::NAN),
            });
        }
    }
    write_report(cfg, "sweep", &rows)
}

#[derive(Debug, Serialize)]
struct DynamicRow {
    network: String,
    layer: String,
    engine: &'static str,
    profile_precision: Option<u8>,
    static_cycles: u64,
    dynamic_cycles: u64,
    speedup_vs_static: f64,
    groups: u64,
    mean_group_precision: Option<f64>,
    /// `precision:count` pairs for the precisions that occur.
    precision_histogram: String,
}

fn histogram_string(h: &[u64; 17]) -> String {
    (1..=16)
        .filter(|&p| h[p] > 0)
        .map(|p| format!("{p}:{}", h[p]))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn dynamic(cfg: &Config) -> Result<(), CliError> {
    let geo = cfg.geometry(cfg.peak_macs[0])?;
    let per_network: Vec<Vec<DynamicRow>> = cfg
        .networks
        .par_iter()
        .map(|net| -> Result<Vec<DynamicRow>, CliError> {
            let source = cfg.dynamic.source(&net.name).expect("dynamic mode is on");
            let layers = net.layers(cfg.tier);
            let mut rows = Vec::new();
            let mut totals = vec![(0u64, 0u64, 0u64, [0u64; 17]); cfg.engines.len()];
            for (i, layer) in layers
                .iter()
                .enumerate()
                .filter(|(_, l)| l.kind() == LayerKind::Conv)
            {
                for (ei, &engine) in cfg.engines.iter().enumerate() {
                    let (stat, dynamic, groups) = match engine {
                        Engine::Loom => {
                            let g = source.groups(
                                i,
                                layer,
                                geo.window_columns(),
                                geo.activation_lanes(),
                            )?;
                            (
                                loom_conv_cycles(layer, &geo)?,
                                loom_dynamic_conv_cycles(layer, &geo, &g)?,
                                g,
                            )
                        }
                        _ => {
                            let g = source.groups(
                                i,
                                layer,
                                geo.stripes_windows(),
                                geo.activation_lanes(),
                            )?;
                            (
                                stripes_cycles(layer, &geo),
                                dstripes_cycles(layer, &geo, &g)?,
                                g,
                            )
                        }
                    };
                    let mut hist = [0u64; 17];
                    for p in groups.precisions() {
                        hist[p.min(&layer.pa).bits() as usize] += 1;
                    }
                    let t = &mut totals[ei];
                    t.0 += stat;
                    t.1 += dynamic;
                    t.2 += groups.len() as u64;
                    for (acc, h) in t.3.iter_mut().zip(hist) {
                        *acc += h;
                    }
                    rows.push(DynamicRow {
                        network: net.name.clone(),
                        layer: layer.name.clone(),
                        engine: engine.name(),
                        profile_precision: Some(layer.pa.bits()),
                        static_cycles: stat,
                        dynamic_cycles: dynamic,
                        speedup_vs_static: stat as f64 / dynamic as f64,
                        groups: groups.len() as u64,
                        mean_group_precision: mean(&hist),
                        precision_histogram: histogram_string(&hist),
                    });
                }
            }
            for (ei, &engine) in cfg.engines.iter().enumerate() {
                let (stat, dynamic, groups, hist) = totals[ei];
                if groups == 0 {
                    continue;
                }
                rows.push(DynamicRow {
                    network: net.name.clone(),
                    layer: "TOTAL".into(),
                    engine: engine.name(),
                    profile_precision: None,
                    static_cycles: stat,
                    dynamic_cycles: dynamic,
                    speedup_vs_static: stat as f64 / dynamic as f64,
                    groups,
                    mean_group_precision: mean(&hist),
                    precision_histogram: histogram_string(&hist),
                });
            }
            Ok(rows)
        })
        .collect::<Result<_, _>>()?;
    let rows: Vec<DynamicRow> = per_network.into_iter().flatten().collect();
    write_report(cfg, "dynamic", &rows)
}

fn mean(hist: &[u64; 17]) -> Option<f64> {
    let n: u64 = hist.iter().sum();
    (n > 0).then(|| {
        hist.iter()
            .enumerate()
            .map(|(p, &c)| p as u64 * c)
            .sum::<u64>() as f64
            / n as f64
    })
}

#[derive(Debug, Serialize)]
struct NetworkRow {
    network: String,
    conv_layers: usize,
    fc_layers: usize,
    conv_pw_100: u8,
    conv_pw_99: u8,
    conv_macs: u64,
    fc_macs: u64,
}

pub fn list_networks(output: &CommonOutput) -> Result<(), CliError> {
    let rows: Vec<NetworkRow> = loom_core::netspec::builtin_networks()
        .into_iter()
        .map(|net| {
            let layers = net.layers(loom_core::netspec::Tier::Full);
            let macs = |k| {
                layers
                    .iter()
                    .filter(|l| l.kind() == k)
                    .map(|l| l.macs())
                    .sum()
            };
            NetworkRow {
                conv_layers: net.count(LayerKind::Conv),
                fc_layers: net.count(LayerKind::Fc),
                conv_pw_100: net.conv_pw.full.bits(),
                conv_pw_99: net.conv_pw.relaxed.bits(),
                conv_macs: macs(LayerKind::Conv),
                fc_macs: macs(LayerKind::Fc),
                network: net.name,
            }
        })
        .collect();
    write_plain(output, "list-networks", &rows)
}
