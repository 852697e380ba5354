//! Bit-exact model of a Serial Inner-Product unit (SIP).
//!
//! A SIP holds one weight bit per lane in its weight registers (WRs). Each
//! cycle it ANDs those bits with `b` incoming bits of each lane's activation,
//! reduces the lanes with an adder tree, and accumulates the result into
//! `AC1`, aligned to the position of the activation bits. After a full pass
//! over the activation precision, `AC2` scales `AC1` by the weight bit's
//! significance and adds it to the output register. Two's complement MSB
//! slices of signed operands contribute negatively; when both MSBs meet the
//! contribution is positive again.
//!
//! Lanes are represented as bit masks (`u64`, lane `i` in bit `i`), so one
//! activation bit-plane across all lanes is a single word.

use thiserror::Error;

use crate::fixq::{Precision, QTensor, Signedness};

/// Lanes supported by the mask representation.
pub const MAX_LANES: usize = 64;
/// Extra cycle for the product/accumulate pipeline stage.
pub const PIPELINE_DRAIN_CYCLES: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SipError {
    #[error("operand lengths differ: {activations} activations vs {weights} weights")]
    LengthMismatch { activations: usize, weights: usize },
    #[error("{len} values exceed the unit's {lanes} lanes")]
    TooManyValues { len: usize, lanes: usize },
    #[error("invalid SIP configuration: {0}")]
    InvalidConfig(String),
    #[error("SIP misuse: {0}")]
    Misuse(String),
    #[error("cascade slices overlap or leave gaps: {0}")]
    SliceOverlap(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SipConfig {
    lanes: usize,
    bits_per_cycle: u8,
}

impl SipConfig {
    pub fn new(lanes: usize, bits_per_cycle: u8) -> Result<Self, SipError> {
        if lanes == 0 || lanes > MAX_LANES {
            return Err(SipError::InvalidConfig(format!("lanes = {lanes}")));
        }
        if bits_per_cycle == 0 || 16 % bits_per_cycle != 0 {
            return Err(SipError::InvalidConfig(format!(
                "bits per cycle = {bits_per_cycle}"
            )));
        }
        Ok(SipConfig {
            lanes,
            bits_per_cycle,
        })
    }

    /// 16 lanes, one activation bit per cycle.
    pub fn standard() -> Self {
        SipConfig {
            lanes: 16,
            bits_per_cycle: 1,
        }
    }

    pub fn lanes(&self) -> usize {
        self.lanes
    }

    pub fn bits_per_cycle(&self) -> u8 {
        self.bits_per_cycle
    }

    /// Activation slices per weight bit.
    pub fn steps_per_pass(&self, activation_precision: Precision) -> u32 {
        (activation_precision.bits() as u32).div_ceil(self.bits_per_cycle as u32)
    }

    fn lane_mask(&self) -> u64 {
        if self.lanes == 64 {
            u64::MAX
        } else {
            (1u64 << self.lanes) - 1
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sip {
    cfg: SipConfig,
    steps_per_pass: u32,
    /// One weight bit per lane.
    wr: u64,
    weight_bit: u8,
    weight_negative: bool,
    ac1: i64,
    out: i64,
    pass_steps: u32,
    cycles: u64,
}

impl Sip {
    pub fn new(cfg: SipConfig, activation_precision: Precision) -> Self {
        Sip {
            cfg,
            steps_per_pass: cfg.steps_per_pass(activation_precision),
            wr: 0,
            weight_bit: 0,
            weight_negative: false,
            ac1: 0,
            out: 0,
            pass_steps: 0,
            cycles: 0,
        }
    }

    pub fn config(&self) -> SipConfig {
        self.cfg
    }

    /// Latches one weight bit per lane. `negative` marks the two's
    /// complement MSB of signed weights, routed through the negation block.
    pub fn load_weight_bits(
        &mut self,
        bits: u64,
        weight_bit_index: u8,
        negative: bool,
    ) -> Result<(), SipError> {
        if self.pass_steps != 0 {
            return Err(SipError::Misuse(format!(
                "weight load after {} of {} activation steps",
                self.pass_steps, self.steps_per_pass
            )));
        }
        if weight_bit_index >= 16 {
            return Err(SipError::Misuse(format!(
                "weight bit index {weight_bit_index}"
            )));
        }
        self.wr = bits & self.cfg.lane_mask();
        self.weight_bit = weight_bit_index;
        self.weight_negative = negative;
        Ok(())
    }

    /// One cycle: `planes[t]` carries bit `activation_bit_index + t` of every
    /// lane's activation. When `msb_negative` is set, the last plane is the
    /// two's complement MSB of signed activations.
    pub fn step(
        &mut self,
        planes: &[u64],
        activation_bit_index: u8,
        msb_negative: bool,
    ) -> Result<(), SipError> {
        if planes.is_empty() || planes.len() > self.cfg.bits_per_cycle as usize {
            return Err(SipError::Misuse(format!(
                "{} activation planes for a {}-bit SIP",
                planes.len(),
                self.cfg.bits_per_cycle
            )));
        }
        if self.pass_steps == self.steps_per_pass {
            return Err(SipError::Misuse("step past the end of the pass".into()));
        }
        let last = planes.len() - 1;
        let tree: i64 = planes
            .iter()
            .enumerate()
            .map(|(t, &plane)| {
                let sum = (self.wr & plane).count_ones() as i64;
                let term = sum << t;
                if msb_negative && t == last {
                    -term
                } else {
                    term
                }
            })
            .sum();
        self.ac1 += tree << activation_bit_index;
        self.pass_steps += 1;
        self.cycles += 1;
        Ok(())
    }

    /// Folds `AC1` into the output register after a full activation pass.
    pub fn finalize_activation_pass(&mut self) -> Result<(), SipError> {
        if self.pass_steps != self.steps_per_pass {
            return Err(SipError::Misuse(format!(
                "finalize after {} of {} activation steps",
                self.pass_steps, self.steps_per_pass
            )));
        }
        let scaled = self.ac1 << self.weight_bit;
        self.out += if self.weight_negative {
            -scaled
        } else {
            scaled
        };
        self.ac1 = 0;
        self.pass_steps = 0;
        Ok(())
    }

    pub fn output(&self) -> i64 {
        self.out
    }

    pub fn accumulator(&self) -> i64 {
        self.ac1
    }

    /// Activation-step cycles consumed so far.
    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    pub fn weight_register(&self) -> u64 {
        self.wr
    }

    /// Clears the accumulators for a new output; the weight registers keep
    /// their contents.
    pub fn reset_output(&mut self) {
        self.ac1 = 0;
        self.out = 0;
        self.pass_steps = 0;
    }
}

/// Bit `bit` of every value as a lane mask.
pub fn bit_plane(values: &[i32], bit: u8) -> u64 {
    values.iter().enumerate().fold(0u64, |acc, (lane, &v)| {
        acc | (((v as u32) >> bit & 1) as u64) << lane
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DotOutcome {
    pub value: i64,
    /// Activation-step cycles, `ceil(P_a / b) * P_w`.
    pub cycles: u64,
}

/// Computes `a . w` on one SIP, weight bits LSB first, activation slices LSB
/// first within each weight bit.
pub fn bit_serial_dot(a: &QTensor, w: &QTensor, cfg: SipConfig) -> Result<DotOutcome, SipError> {
    if a.len() != w.len() {
        return Err(SipError::LengthMismatch {
            activations: a.len(),
            weights: w.len(),
        });
    }
    if a.len() > cfg.lanes() {
        return Err(SipError::TooManyValues {
            len: a.len(),
            lanes: cfg.lanes(),
        });
    }
    let pa = a.precision().bits();
    let pw = w.precision().bits();
    let b = cfg.bits_per_cycle();
    let a_signed = a.signedness() == Signedness::Signed;
    let w_signed = w.signedness() == Signedness::Signed;

    let act_planes: Vec<u64> = (0..pa).map(|i| bit_plane(a.values(), i)).collect();
    let mut sip = Sip::new(cfg, a.precision());
    for j in 0..pw {
        sip.load_weight_bits(bit_plane(w.values(), j), j, w_signed && j == pw - 1)?;
        for start in (0..pa).step_by(b as usize) {
            let end = (start + b).min(pa);
            let msb_slice = a_signed && end == pa;
            sip.step(&act_planes[start as usize..end as usize], start, msb_slice)?;
        }
        sip.finalize_activation_pass()?;
    }
    Ok(DotOutcome {
        value: sip.output(),
        cycles: sip.cycles(),
    })
}

/// Reference bit-parallel inner product.
pub fn oracle_dot(a: &[i32], w: &[i32]) -> Result<i64, SipError> {
    if a.len() != w.len() {
        return Err(SipError::LengthMismatch {
            activations: a.len(),
            weights: w.len(),
        });
    }
    Ok(a.iter().zip(w).map(|(&x, &y)| x as i64 * y as i64).sum())
}

/// Partial output of one SIP in a cascade, covering inputs `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CascadePartial {
    pub value: i64,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CascadeOutcome {
    pub value: i64,
    /// One reduction cycle per slice.
    pub cycles: u64,
}

/// Reduces the partial sums of a daisy-chained row of SIPs that together
/// cover inputs `[0, len)`.
pub fn cascade_reduce(partials: &[CascadePartial], len: usize) -> Result<CascadeOutcome, SipError> {
    if partials.is_empty() {
        return Err(SipError::SliceOverlap("no slices".into()));
    }
    let mut order: Vec<&CascadePartial> = partials.iter().collect();
    order.sort_by_key(|p| (p.start, p.end));
    let mut next = 0;
    for p in &order {
        if p.start != next || p.end < p.start {
            return Err(SipError::SliceOverlap(format!(
                "slice [{}, {}) where {next} was expected",
                p.start, p.end
            )));
        }
        next = p.end;
    }
    if next != len {
        return Err(SipError::SliceOverlap(format!(
            "slices cover [0, {next}) of [0, {len})"
        )));
    }
    // The chain forwards one partial per cycle through the AC1 multiplexer.
    let value = order.iter().fold(0i64, |acc, p| acc + p.value);
    Ok(CascadeOutcome {
        value,
        cycles: partials.len() as u64,
    })
}

/// Max-pooling comparator over output registers; zero cycle cost.
pub fn max_pool(outputs: &[i64]) -> Option<i64> {
    outputs.iter().copied().max()
}
