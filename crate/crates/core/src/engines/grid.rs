//! Functional model of the bit-serial grid.
//!
//! Every unit of the grid is simulated with [`crate::sip`], so the outputs
//! are bit-exact and the cycle counts come from the units themselves. This is
//! slow and intended for small layers that cross-check the closed forms in
//! [`super::cycles`].

use super::cycles::{fc_plan, ActivationGroups};
use super::{EngineError, EngineGeometry, LayerKind, LayerShape, LayerSpec};
use crate::fixq::{Precision, QTensor, Signedness};
use crate::sip::{bit_serial_dot, cascade_reduce, CascadePartial, SipConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridRun {
    /// Filter-major: output `(f, w)` at `f * windows + w`.
    pub outputs: Vec<i64>,
    pub cycles: u64,
}

fn data(e: impl std::fmt::Display) -> EngineError {
    EngineError::Data(e.to_string())
}

fn check_matrix(t: &QTensor, rows: u64, cols: u64, what: &str) -> Result<(), EngineError> {
    if t.shape() != [rows as usize, cols as usize] {
        return Err(data(format!(
            "{what} shape {:?}, expected [{rows}, {cols}]",
            t.shape()
        )));
    }
    Ok(())
}

fn sip_config(geo: &EngineGeometry) -> Result<SipConfig, EngineError> {
    Ok(SipConfig::new(
        geo.activation_lanes() as usize,
        geo.bits_per_cycle(),
    )?)
}

/// Runs one inner-product slice on a fresh unit; returns `(value, cycles)`.
fn unit_pass(
    cfg: SipConfig,
    acts: Vec<i32>,
    weights: Vec<i32>,
    pa: Precision,
    pw: Precision,
    a_sign: Signedness,
    w_sign: Signedness,
) -> Result<(i64, u64), EngineError> {
    let a = QTensor::vector(acts, pa, a_sign).map_err(data)?;
    let w = QTensor::vector(weights, pw, w_sign).map_err(data)?;
    let out = bit_serial_dot(&a, &w, cfg)?;
    Ok((out.value, out.cycles))
}

/// Convolution on the grid. `activations` is the im2col matrix
/// `[windows, reduction]` and `weights` is `[filters, reduction]`. With
/// `groups`, each brick runs at its group's precision (capped at the layer
/// profile); group values must fit that precision.
pub fn run_conv(
    geo: &EngineGeometry,
    layer: &LayerSpec,
    activations: &QTensor,
    weights: &QTensor,
    groups: Option<&ActivationGroups>,
) -> Result<GridRun, EngineError> {
    if layer.kind() != LayerKind::Conv {
        return Err(EngineError::WrongLayerKind {
            layer: layer.name.clone(),
            expected: LayerKind::Conv,
        });
    }
    let (r, w, f) = (layer.reduction(), layer.windows(), layer.outputs());
    check_matrix(activations, w, r, "activation")?;
    check_matrix(weights, f, r, "weight")?;
    if activations.precision() > layer.pa || weights.precision() > layer.pw {
        return Err(data(format!(
            "operands at {}/{} exceed the layer profile {}/{}",
            activations.precision(),
            weights.precision(),
            layer.pa,
            layer.pw
        )));
    }
    if let Some(g) = groups {
        g.check_covers(layer, geo.window_columns(), geo.activation_lanes())?;
    }
    let cfg = sip_config(geo)?;
    let (rows, cols, lanes) = (
        geo.filter_lanes(),
        geo.window_columns(),
        geo.activation_lanes(),
    );
    let (a, wt) = (activations.values(), weights.values());
    let mut outputs = vec![0i64; (f * w) as usize];
    let mut cycles = 0;

    for f0 in (0..f).step_by(rows as usize) {
        for (wg, w0) in (0..w).step_by(cols as usize).enumerate() {
            for (s, r0) in (0..r).step_by(lanes as usize).enumerate() {
                let r1 = (r0 + lanes).min(r);
                let p = groups.map_or(layer.pa, |g| g.precision(wg as u64, s as u64).min(layer.pa));
                let mut brick = 0;
                for fi in f0..(f0 + rows).min(f) {
                    let ws: Vec<i32> = (r0..r1).map(|k| wt[(fi * r + k) as usize]).collect();
                    for wi in w0..(w0 + cols).min(w) {
                        let xs: Vec<i32> = (r0..r1).map(|k| a[(wi * r + k) as usize]).collect();
                        let (value, c) = unit_pass(
                            cfg,
                            xs,
                            ws.clone(),
                            p,
                            layer.pw,
                            activations.signedness(),
                            weights.signedness(),
                        )?;
                        outputs[(fi * w + wi) as usize] += value;
                        brick = brick.max(c);
                    }
                }
                cycles += brick;
            }
        }
    }
    Ok(GridRun { outputs, cycles })
}

/// Fully-connected layer on the grid, following [`fc_plan`]: one output per
/// unit, inner products sliced over chained units when a batch has fewer
/// outputs than units. Activations stream at the baseline width.
pub fn run_fc(
    geo: &EngineGeometry,
    layer: &LayerSpec,
    activations: &QTensor,
    weights: &QTensor,
) -> Result<GridRun, EngineError> {
    let plan = fc_plan(layer, geo, layer.pw.bits() as f64)?;
    let LayerShape::Fc {
        inputs,
        outputs: nout,
    } = layer.shape
    else {
        unreachable!("fc_plan checked the layer kind")
    };
    if activations.len() as u64 != inputs {
        return Err(data(format!(
            "{} activations for {inputs} inputs",
            activations.len()
        )));
    }
    check_matrix(weights, nout, inputs, "weight")?;
    if weights.precision() > layer.pw {
        return Err(data(format!(
            "weights at {} exceed the layer profile {}",
            weights.precision(),
            layer.pw
        )));
    }
    let base = Precision::new(geo.base_precision()).map_err(data)?;
    if activations.precision() > base {
        return Err(data(format!("activations wider than {base}")));
    }
    let cfg = sip_config(geo)?;
    let lanes = geo.activation_lanes();
    let chunks = inputs.div_ceil(lanes);
    let a = activations.values();
    let wt = weights.values();

    let mut outputs = Vec::with_capacity(nout as usize);
    let mut cycles = 0;
    let mut next = 0u64;
    for batch in &plan.batches {
        for _ in 0..batch.repeat {
            let mut unit_cycles = 0;
            let mut reduce_cycles = 0;
            for o in next..next + batch.outputs {
                let mut partials = Vec::with_capacity(batch.slices as usize);
                for slice in 0..batch.slices {
                    let c0 = slice * batch.rounds;
                    let c1 = ((slice + 1) * batch.rounds).min(chunks);
                    let (start, end) = ((c0 * lanes).min(inputs), (c1 * lanes).min(inputs));
                    let mut value = 0;
                    let mut spent = 0;
                    for k0 in (start..end).step_by(lanes as usize) {
                        let k1 = (k0 + lanes).min(end);
                        let xs = a[k0 as usize..k1 as usize].to_vec();
                        let ws =
                            wt[(o * inputs + k0) as usize..(o * inputs + k1) as usize].to_vec();
                        let (v, c) = unit_pass(
                            cfg,
                            xs,
                            ws,
                            base,
                            layer.pw,
                            activations.signedness(),
                            weights.signedness(),
                        )?;
                        value += v;
                        spent += c;
                    }
                    unit_cycles = unit_cycles.max(spent);
                    partials.push(CascadePartial {
                        value,
                        start: start as usize,
                        end: end as usize,
                    });
                }
                if batch.slices > 1 {
                    let reduced = cascade_reduce(&partials, inputs as usize)?;
                    reduce_cycles = reduce_cycles.max(reduced.cycles);
                    outputs.push(reduced.value);
                } else {
                    outputs.push(partials[0].value);
                }
            }
            cycles += unit_cycles + plan.fill_per_batch + reduce_cycles;
            next += batch.outputs;
        }
    }
    Ok(GridRun { outputs, cycles })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Wavefront {
    /// 1b x 1b products completed in each cycle.
    pub products_per_cycle: Vec<u64>,
}

impl Wavefront {
    pub fn cycles(&self) -> u64 {
        self.products_per_cycle.len() as u64
    }

    pub fn total_products(&self) -> u64 {
        self.products_per_cycle.iter().sum()
    }
}

/// Cycle-by-cycle occupancy of one fully-connected output batch without
/// cascading. Column `c` latches its first weight bit at cycle `c`, and every
/// unit then works `rounds * pw * 16 / b` cycles.
pub fn fc_wavefront(
    geo: &EngineGeometry,
    outputs: u64,
    inputs: u64,
    pw: Precision,
) -> Result<Wavefront, EngineError> {
    if outputs == 0 || outputs > geo.sip_count() || inputs == 0 {
        return Err(data(format!(
            "batch of {outputs} outputs x {inputs} inputs on {} units",
            geo.sip_count()
        )));
    }
    let lanes = geo.activation_lanes();
    let work = inputs.div_ceil(lanes) * pw.bits() as u64 * geo.fc_cycles_per_weight_bit();
    let rows = geo.filter_lanes();
    // Outputs fill columns first so the wavefront spans every used column.
    let per_column: Vec<u64> = (0..geo.window_columns())
        .map(|c| {
            let full = outputs / geo.window_columns();
            full + u64::from(c < outputs % geo.window_columns())
        })
        .collect();
    debug_assert!(per_column.iter().all(|&n| n <= rows));
    let used = per_column.iter().filter(|&&n| n > 0).count() as u64;
    let span = work + used - 1;
    let per_unit = lanes * geo.bits_per_cycle() as u64;
    let products_per_cycle = (0..span)
        .map(|t| {
            per_column
                .iter()
                .enumerate()
                .filter(|(c, _)| (*c as u64) <= t && t < *c as u64 + work)
                .map(|(_, &n)| n * per_unit)
                .sum()
        })
        .collect();
    Ok(Wavefront { products_per_cycle })
}
