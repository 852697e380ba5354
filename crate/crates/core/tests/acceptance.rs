//! Acceptance checks. Runs as a plain binary (no libtest harness) so every
//! criterion prints exactly one PASS/FAIL line; exits non-zero if any fail.

use std::fmt::Display;
use std::time::{Duration, Instant};

use loom_core::bitpack::{bits_saved_fraction, pack, WEIGHT_GROUP_WIDTH};
use loom_core::dynprec::{
    estimate_speedup_linear, group_activation_precision, ActivationDistribution,
    SyntheticActivations,
};
use loom_core::engines::grid::fc_wavefront;
use loom_core::engines::{
    dpnn_cycles, dstripes_cycles, geomean, loom_conv_cycles, loom_dynamic_conv_cycles,
    loom_fc_cycles, simulate_network, stripes_cycles, ActivationGroups, Engine, EngineGeometry,
    GroupSource, LayerKind, LayerSpec,
};
use loom_core::fixq::{min_precision, Precision, QTensor, Signedness};
use loom_core::netspec::{builtin_network, builtin_networks, NetworkSpec, Tier};
use loom_core::sip::{bit_serial_dot, oracle_dot, SipConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: &'static str, pass: bool, detail: impl Display) -> Outcome {
    Outcome {
        id,
        pass,
        detail: detail.to_string(),
    }
}

fn within(actual: f64, target: f64, tol: f64) -> bool {
    (actual - target).abs() <= tol * target
}

fn p(bits: u8) -> Precision {
    Precision::of(bits)
}

fn round_up(pa: u8, b: u8) -> u64 {
    (pa as u64).div_ceil(b as u64) * b as u64
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x51b);
    let cases = 100_000;
    let mut failures = 0u64;
    let mut first = None;
    for case in 0..cases {
        let lanes = rng.random_range(1..=16usize);
        let pa = rng.random_range(1..=16u8);
        let pw = rng.random_range(1..=16u8);
        let b = [1u8, 2, 4][rng.random_range(0..3)];
        let a_sign = if rng.random_bool(0.5) {
            Signedness::Signed
        } else {
            Signedness::Unsigned
        };
        // A quarter of the cases use only range extremes.
        let extremes = case % 4 == 0;
        let draw = |rng: &mut ChaCha8Rng, sign: Signedness, prec: Precision| -> i32 {
            let (lo, hi) = (sign.min_value(prec), sign.max_value(prec));
            let v = if extremes {
                if rng.random_bool(0.5) {
                    lo
                } else {
                    hi
                }
            } else {
                rng.random_range(lo..=hi)
            };
            v as i32
        };
        let a: Vec<i32> = (0..lanes).map(|_| draw(&mut rng, a_sign, p(pa))).collect();
        let w: Vec<i32> = (0..lanes)
            .map(|_| draw(&mut rng, Signedness::Signed, p(pw)))
            .collect();
        let at = QTensor::vector(a.clone(), p(pa), a_sign).unwrap();
        let wt = QTensor::vector(w.clone(), p(pw), Signedness::Signed).unwrap();
        let cfg = SipConfig::new(16, b).unwrap();
        let got = bit_serial_dot(&at, &wt, cfg).unwrap();
        let want = oracle_dot(&a, &w).unwrap();
        let cycles = (pa as u64).div_ceil(b as u64) * pw as u64;
        if got.value != want || got.cycles != cycles {
            failures += 1;
            first.get_or_insert(format!(
                "a={a:?} w={w:?} pa={pa} pw={pw} b={b}: {} vs {want}",
                got.value
            ));
        }
    }
    let elapsed = start.elapsed();
    let pass = failures == 0 && elapsed < Duration::from_secs(60);
    outcome(
        "1 SIP oracle equivalence",
        pass,
        format!(
            "{cases} cases, {failures} mismatches, {:.1}s{}",
            elapsed.as_secs_f64(),
            first.map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

fn aligned_conv(pa: u8, pw: u8) -> LayerSpec {
    // 128 filters, 16 windows (4x4), 16 inputs.
    LayerSpec::conv("aligned", 16, 1, 4, 128, p(pa), p(pw))
}

fn criterion_2() -> Outcome {
    let mut bad = Vec::new();
    for b in [1u8, 2, 4] {
        let geo = EngineGeometry::new(128, b).unwrap();
        for pa in 1..=16u8 {
            for pw in 1..=16u8 {
                let layer = aligned_conv(pa, pw);
                let loom = loom_conv_cycles(&layer, &geo).unwrap();
                let dpnn = dpnn_cycles(&layer, &geo);
                // loom / dpnn == round_up(pa, b) * pw / 256, cross-multiplied.
                if loom * 256 != dpnn * round_up(pa, b) * pw as u64 {
                    bad.push(format!("b={b} pa={pa} pw={pw}: {loom}/{dpnn}"));
                }
            }
        }
        let full = aligned_conv(16, 16);
        let dpnn = dpnn_cycles(&full, &geo);
        let groups_loom = ActivationGroups::uniform(&full, geo.window_columns(), 16, p(16));
        let groups_stripes = ActivationGroups::uniform(&full, geo.stripes_windows(), 16, p(16));
        let all = [
            loom_conv_cycles(&full, &geo).unwrap(),
            loom_dynamic_conv_cycles(&full, &geo, &groups_loom).unwrap(),
            stripes_cycles(&full, &geo),
            dstripes_cycles(&full, &geo, &groups_stripes).unwrap(),
        ];
        if all.iter().any(|&c| c != dpnn) {
            bad.push(format!("b={b} at 16/16: {all:?} vs dpnn {dpnn}"));
        }
    }
    outcome(
        "2 conv formula exactness",
        bad.is_empty(),
        if bad.is_empty() {
            "768 (P_a, P_w, b) points exact; all engines equal the baseline at 16/16".to_string()
        } else {
            bad.join("; ")
        },
    )
}

fn criterion_3() -> Outcome {
    let mut bad = Vec::new();
    let mut fills = Vec::new();
    for (b, fill) in [(1u8, 15u64), (2, 7), (4, 3)] {
        let geo = EngineGeometry::new(128, b).unwrap();
        let outputs = geo.sip_count();
        for pw in 1..=16u8 {
            for chunks in [1u64, 4, 64] {
                let layer = LayerSpec::fc("aligned", 16 * chunks, outputs, p(pw));
                let c = loom_fc_cycles(&layer, &geo).unwrap();
                let dpnn = dpnn_cycles(&layer, &geo);
                if c.steady * 16 != dpnn * pw as u64 || c.fill != fill || c.cascade != 0 {
                    bad.push(format!("b={b} pw={pw} chunks={chunks}: {c:?} dpnn {dpnn}"));
                }
            }
        }
        let wave = fc_wavefront(&geo, outputs, 16, p(1)).unwrap();
        let span_fill = wave.cycles() - geo.fc_cycles_per_weight_bit();
        if span_fill != fill {
            bad.push(format!("b={b}: wavefront fill {span_fill}"));
        }
        fills.push(format!("b={b}: {span_fill}"));
    }
    outcome(
        "3 FC formula exactness",
        bad.is_empty(),
        if bad.is_empty() {
            format!("steady ratio P_w/16 exact; fill {}", fills.join(", "))
        } else {
            bad.join("; ")
        },
    )
}

fn criterion_4() -> Outcome {
    let cycles = |b: u8, pa: u8| {
        let geo = EngineGeometry::new(128, b).unwrap();
        loom_conv_cycles(&aligned_conv(pa, 11), &geo).unwrap()
    };
    let (c8, c5) = (cycles(1, 8), cycles(1, 5));
    let (d8, d5) = (cycles(4, 8), cycles(4, 5));
    let pass = c8 * 5 == c5 * 8 && d8 == d5;
    outcome(
        "4 b-insensitivity",
        pass,
        format!(
            "b=1: {:.4}x, b=4: {:.4}x",
            c8 as f64 / c5 as f64,
            d8 as f64 / d5 as f64
        ),
    )
}

fn network(name: &str) -> NetworkSpec {
    builtin_network(name).unwrap()
}

fn loom_speedup(name: &str, tier: Tier, kind: Option<LayerKind>, geo: &EngineGeometry) -> f64 {
    let r = simulate_network(&network(name), Engine::Loom, geo, tier, None).unwrap();
    match kind {
        Some(k) => r.kind_speedup(k).unwrap(),
        None => r.speedup(),
    }
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let geo = EngineGeometry::reference();
    let targets = [
        ("AlexNet", Tier::Full, 1.65),
        ("GoogLeNet", Tier::Full, 2.25),
        ("VGGS", Tier::Full, 1.63),
        ("VGGM", Tier::Full, 1.63),
        ("VGG19", Tier::Full, 1.62),
        ("AlexNet", Tier::Relaxed, 1.85),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, tier, target) in targets {
        let s = loom_speedup(name, tier, Some(LayerKind::Fc), &geo);
        let ok = within(s, target, 0.05);
        pass &= ok;
        parts.push(format!(
            "{name}@{tier} {s:.3} (target {target}{})",
            if ok { "" } else { " OUT" }
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(10);
    outcome(
        "5 FC speedups (+-5%)",
        pass,
        format!("{}; {:.2}s", parts.join(", "), elapsed.as_secs_f64()),
    )
}

const CONV_TARGETS: [(&str, f64); 6] = [
    ("NiN", 2.97),
    ("AlexNet", 4.25),
    ("GoogLeNet", 2.63),
    ("VGGS", 3.98),
    ("VGGM", 4.12),
    ("VGG19", 2.17),
];

fn criterion_6a() -> Outcome {
    let geo = EngineGeometry::reference();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, target) in CONV_TARGETS {
        let s = loom_speedup(name, Tier::Full, Some(LayerKind::Conv), &geo);
        let ok = within(s, target, 0.15);
        pass &= ok;
        parts.push(format!(
            "{name} {s:.3}/{target} ({:+.1}%)",
            100.0 * (s / target - 1.0)
        ));
    }
    outcome("6a Loom conv speedups within +-15%", pass, parts.join(", "))
}

fn criterion_6b() -> Outcome {
    let geo = EngineGeometry::reference();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, target) in CONV_TARGETS {
        let s = loom_speedup(name, Tier::Full, Some(LayerKind::Conv), &geo);
        let ok = s <= target * 1.05;
        pass &= ok;
        parts.push(format!("{name} {s:.3} <= {:.3}", target * 1.05));
    }
    outcome(
        "6b Loom conv static never exceeds target by >5%",
        pass,
        parts.join(", "),
    )
}

fn criterion_6c() -> Outcome {
    let geo = EngineGeometry::reference();
    let mut pass = true;
    let mut parts = Vec::new();
    for (tier, target) in [(Tier::Full, 1.84), (Tier::Relaxed, 1.99)] {
        let speedups: Vec<f64> = builtin_networks()
            .iter()
            .map(|net| {
                simulate_network(net, Engine::Stripes, &geo, tier, None)
                    .unwrap()
                    .kind_speedup(LayerKind::Conv)
                    .unwrap()
            })
            .collect();
        let g = geomean(&speedups).unwrap();
        let ok = within(g, target, 0.15);
        pass &= ok;
        parts.push(format!("{tier}%: {g:.3} (target {target})"));
    }
    outcome(
        "6c Stripes conv geomean within +-15%",
        pass,
        parts.join(", "),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let values: Vec<i32> = (0..WEIGHT_GROUP_WIDTH)
        .map(|_| rng.random_range(-4096..4096))
        .collect();
    let t = QTensor::vector(values, p(13), Signedness::Signed).unwrap();
    let stream = pack(&t, WEIGHT_GROUP_WIDTH).unwrap();
    let ratio = stream.stored_bits() as f64 / stream.baseline_bits(Precision::BASE) as f64;
    let exact = stream.stored_bits() * 10000 == stream.baseline_bits(Precision::BASE) * 8125;
    let formula = Precision::iter_all()
        .all(|q| bits_saved_fraction(q, Precision::BASE) == (16 - q.bits()) as f64 / 16.0);
    outcome(
        "7 footprint exactness",
        exact && formula,
        format!(
            "13-bit stream stores {:.4} of baseline; saved-fraction formula {}",
            ratio,
            if formula {
                "exact for P=1..16"
            } else {
                "WRONG"
            }
        ),
    )
}

fn criterion_8a() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let len = rng.random_range(1..=256usize);
        let width = rng.random_range(0..=16u32);
        let values: Vec<u16> = (0..len)
            .map(|_| {
                if width == 0 {
                    0
                } else {
                    (rng.random::<u32>() & ((1u32 << width) - 1)) as u16
                }
            })
            .collect();
        let oracle = values
            .iter()
            .map(|&v| min_precision(&[v as i32], Signedness::Unsigned))
            .max()
            .unwrap();
        if group_activation_precision(&values) != oracle {
            mismatches += 1;
        }
    }
    outcome(
        "8a detector vs brute-force oracle",
        mismatches == 0,
        format!("10000 groups, {mismatches} mismatches"),
    )
}

fn criterion_8b() -> Outcome {
    let geo = EngineGeometry::reference();
    let mut violations = Vec::new();
    let mut layers_checked = 0;
    for (seed, dist) in [
        (1u64, ActivationDistribution::Uniform),
        (
            2,
            ActivationDistribution::ClippedNormal {
                sigma_fraction: 0.1,
            },
        ),
    ] {
        for net in builtin_networks() {
            let src = SyntheticActivations::new(net.name.clone(), seed, dist);
            for tier in [Tier::Full, Tier::Relaxed] {
                for (i, layer) in net.layers(tier).iter().enumerate() {
                    if layer.kind() != LayerKind::Conv {
                        continue;
                    }
                    layers_checked += 1;
                    let lg = src.groups(i, layer, geo.window_columns(), 16).unwrap();
                    let sg = src.groups(i, layer, geo.stripes_windows(), 16).unwrap();
                    let loom_dyn = loom_dynamic_conv_cycles(layer, &geo, &lg).unwrap();
                    let loom_static = loom_conv_cycles(layer, &geo).unwrap();
                    let ds = dstripes_cycles(layer, &geo, &sg).unwrap();
                    let st = stripes_cycles(layer, &geo);
                    if loom_dyn > loom_static || ds > st {
                        violations.push(format!("{}/{}", net.name, layer.name));
                    }
                }
            }
        }
    }
    outcome(
        "8b dynamic cycle dominance",
        violations.is_empty(),
        format!(
            "{layers_checked} layer runs, {} violations{}",
            violations.len(),
            if violations.is_empty() {
                String::new()
            } else {
                format!(": {}", violations.join(", "))
            }
        ),
    )
}

fn estimate(net: &NetworkSpec, geo: &EngineGeometry) -> f64 {
    estimate_speedup_linear(
        &net.layers(Tier::Full),
        &net.effective_weight_precisions(Tier::Full),
        geo,
    )
    .unwrap()
}

fn criterion_9a() -> Outcome {
    let geo = EngineGeometry::reference();
    let nets = builtin_networks();
    let speedups: Vec<f64> = nets.iter().map(|n| estimate(n, &geo)).collect();
    let alex = speedups[nets.iter().position(|n| n.name == "AlexNet").unwrap()];
    let g = geomean(&speedups).unwrap();
    let pass = within(alex, 5.66, 0.10) && within(g, 4.38, 0.10);
    let per: Vec<String> = nets
        .iter()
        .zip(&speedups)
        .map(|(n, s)| format!("{} {s:.3}", n.name))
        .collect();
    outcome(
        "9a linear estimator vs reference (+-10%)",
        pass,
        format!(
            "AlexNet {alex:.3} (target 5.66), geomean {g:.3} (target 4.38); {}",
            per.join(", ")
        ),
    )
}

fn criterion_9b() -> Outcome {
    let geo = EngineGeometry::reference();
    let mut checked = 0;
    let mut bad = Vec::new();
    for net in builtin_networks() {
        let layers = net.layers(Tier::Full);
        let eff = net.effective_weight_precisions(Tier::Full);
        let base = estimate_speedup_linear(&layers, &eff, &geo).unwrap();
        for i in 0..eff.len() {
            for delta in [-0.5, 0.25] {
                let mut e = eff.clone();
                e[i] = (e[i] + delta).clamp(0.5, 16.0);
                if e[i] == eff[i] {
                    continue;
                }
                checked += 1;
                let s = estimate_speedup_linear(&layers, &e, &geo).unwrap();
                let ok = if delta > 0.0 { s < base } else { s > base };
                if !ok {
                    bad.push(format!("{} layer {i}", net.name));
                }
            }
        }
    }
    outcome(
        "9b estimator strictly monotone",
        bad.is_empty(),
        format!(
            "{checked} perturbations, {} violations {}",
            bad.len(),
            bad.join(", ")
        ),
    )
}

const SWEEP: [u64; 3] = [128, 256, 512];

fn sweep_speedups(name: &str) -> Vec<f64> {
    SWEEP
        .iter()
        .map(|&m| loom_speedup(name, Tier::Full, None, &EngineGeometry::new(m, 1).unwrap()))
        .collect()
}

fn criterion_10a() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for net in builtin_networks() {
        let s = sweep_speedups(&net.name);
        let ok = s.windows(2).all(|w| w[1] <= w[0]);
        pass &= ok;
        parts.push(format!("{} {:.3}/{:.3}/{:.3}", net.name, s[0], s[1], s[2]));
    }
    outcome("10a sweep non-increasing 128->512", pass, parts.join(", "))
}

fn criterion_10b() -> Outcome {
    let mut pass = true;
    let mut below = Vec::new();
    for net in builtin_networks() {
        for (m, s) in SWEEP.iter().zip(sweep_speedups(&net.name)) {
            if s <= 1.0 {
                pass = false;
                below.push(format!("{}@{m} {s:.3}", net.name));
            }
        }
    }
    outcome(
        "10b sweep speedup > 1 at every point",
        pass,
        if below.is_empty() {
            "all points above 1".to_string()
        } else {
            format!("at or below 1: {}", below.join(", "))
        },
    )
}

fn main() {
    let checks: [fn() -> Outcome; 15] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6a,
        criterion_6b,
        criterion_6c,
        criterion_7,
        criterion_8a,
        criterion_8b,
        criterion_9a,
        criterion_9b,
        criterion_10a,
        criterion_10b,
    ];
    let mut failed = 0;
    for check in checks {
        let o = check();
        println!(
            "{} criterion {}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.id,
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        checks.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
