//! Fixed-point values with an explicit bit precision.
//!
//! Precisions are pure bit-widths in `[1, 16]`; no fractional/integer split is
//! modelled. Activations are conventionally unsigned (post-ReLU) and weights
//! signed two's complement, but every tensor carries its own [`Signedness`].

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Width of the bit-parallel baseline datapath.
pub const BASE_PRECISION: u8 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FixqError {
    #[error("precision {0} outside [1, 16]")]
    InvalidPrecision(u32),
    #[error("value {value} not representable at {precision} bits ({signedness})")]
    RangeViolation {
        value: i64,
        precision: Precision,
        signedness: Signedness,
    },
    #[error("shape {shape:?} holds {expected} elements but {actual} values were given")]
    ShapeMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("shape dimensions must be positive, got {0:?}")]
    EmptyDimension(Vec<usize>),
}

/// A bit-width in `[1, 16]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Precision(u8);

impl Precision {
    pub const MIN: Precision = Precision(1);
    pub const BASE: Precision = Precision(BASE_PRECISION);

    pub fn new(bits: u8) -> Result<Self, FixqError> {
        if (1..=BASE_PRECISION).contains(&bits) {
            Ok(Precision(bits))
        } else {
            Err(FixqError::InvalidPrecision(bits as u32))
        }
    }

    /// Panicking constructor for literals and table data.
    pub const fn of(bits: u8) -> Self {
        assert!(
            bits >= 1 && bits <= BASE_PRECISION,
            "precision outside [1, 16]"
        );
        Precision(bits)
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    /// Smallest multiple of `step` that is `>= self`.
    pub fn round_up_to(self, step: u8) -> u32 {
        let step = step.max(1) as u32;
        (self.0 as u32).div_ceil(step) * step
    }

    pub fn iter_all() -> impl Iterator<Item = Precision> {
        (1..=BASE_PRECISION).map(Precision)
    }
}

impl TryFrom<u8> for Precision {
    type Error = FixqError;

    fn try_from(bits: u8) -> Result<Self, Self::Error> {
        Precision::new(bits)
    }
}

impl From<Precision> for u8 {
    fn from(p: Precision) -> u8 {
        p.0
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}b", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signedness {
    Signed,
    Unsigned,
}

impl Signedness {
    pub fn is_signed(self) -> bool {
        matches!(self, Signedness::Signed)
    }

    pub fn min_value(self, precision: Precision) -> i64 {
        match self {
            Signedness::Signed => -(1i64 << (precision.bits() - 1)),
            Signedness::Unsigned => 0,
        }
    }

    pub fn max_value(self, precision: Precision) -> i64 {
        match self {
            Signedness::Signed => (1i64 << (precision.bits() - 1)) - 1,
            Signedness::Unsigned => (1i64 << precision.bits()) - 1,
        }
    }

    pub fn contains(self, precision: Precision, value: i64) -> bool {
        (self.min_value(precision)..=self.max_value(precision)).contains(&value)
    }
}

impl fmt::Display for Signedness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Signedness::Signed => "signed",
            Signedness::Unsigned => "unsigned",
        })
    }
}

/// Out-of-range handling for [`quantize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantizeMode {
    /// Saturate to the nearest representable boundary.
    Clip,
    /// Reject values outside the range.
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QValue {
    raw: i32,
    precision: Precision,
    signedness: Signedness,
}

impl QValue {
    pub fn new(raw: i32, precision: Precision, signedness: Signedness) -> Result<Self, FixqError> {
        if signedness.contains(precision, raw as i64) {
            Ok(QValue {
                raw,
                precision,
                signedness,
            })
        } else {
            Err(FixqError::RangeViolation {
                value: raw as i64,
                precision,
                signedness,
            })
        }
    }

    pub fn raw(&self) -> i32 {
        self.raw
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn signedness(&self) -> Signedness {
        self.signedness
    }
}

/// Quantizes a 16-bit integer to `precision` bits.
pub fn quantize(
    x: i16,
    precision: Precision,
    signedness: Signedness,
    mode: QuantizeMode,
) -> Result<QValue, FixqError> {
    let lo = signedness.min_value(precision);
    let hi = signedness.max_value(precision);
    let x = x as i64;
    let raw = match mode {
        QuantizeMode::Clip => x.clamp(lo, hi),
        QuantizeMode::Error if (lo..=hi).contains(&x) => x,
        QuantizeMode::Error => {
            return Err(FixqError::RangeViolation {
                value: x,
                precision,
                signedness,
            })
        }
    };
    Ok(QValue {
        raw: raw as i32,
        precision,
        signedness,
    })
}

/// Width needed for a single value; 0 for zero.
fn value_width(v: i32, signedness: Signedness) -> u32 {
    match signedness {
        Signedness::Unsigned if v < 0 => BASE_PRECISION as u32,
        Signedness::Unsigned => 32 - (v as u32).leading_zeros(),
        // -1 and 0 both fit in one bit; otherwise magnitude bits plus sign.
        Signedness::Signed => {
            let folded = if v < 0 { !v } else { v } as u32;
            33 - folded.leading_zeros()
        }
    }
}

/// Smallest precision at which every value is representable, floored at one
/// bit. Negative values are never representable unsigned and force the
/// baseline width.
pub fn min_precision(values: &[i32], signedness: Signedness) -> Precision {
    let width = values
        .iter()
        .map(|&v| value_width(v, signedness))
        .max()
        .unwrap_or(0);
    Precision((width.clamp(1, BASE_PRECISION as u32)) as u8)
}

/// Dense fixed-point tensor; all elements share one precision and signedness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QTensor {
    shape: Vec<usize>,
    values: Vec<i32>,
    precision: Precision,
    signedness: Signedness,
}

impl QTensor {
    pub fn new(
        shape: Vec<usize>,
        values: Vec<i32>,
        precision: Precision,
        signedness: Signedness,
    ) -> Result<Self, FixqError> {
        if shape.contains(&0) {
            return Err(FixqError::EmptyDimension(shape));
        }
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(FixqError::ShapeMismatch {
                shape,
                expected,
                actual: values.len(),
            });
        }
        if let Some(&bad) = values
            .iter()
            .find(|&&v| !signedness.contains(precision, v as i64))
        {
            return Err(FixqError::RangeViolation {
                value: bad as i64,
                precision,
                signedness,
            });
        }
        Ok(QTensor {
            shape,
            values,
            precision,
            signedness,
        })
    }

    /// One-dimensional tensor over `values`.
    pub fn vector(
        values: Vec<i32>,
        precision: Precision,
        signedness: Signedness,
    ) -> Result<Self, FixqError> {
        if values.is_empty() {
            // Zero-length vectors stand for empty inner products.
            return Ok(QTensor {
                shape: vec![0],
                values,
                precision,
                signedness,
            });
        }
        QTensor::new(vec![values.len()], values, precision, signedness)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[i32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn signedness(&self) -> Signedness {
        self.signedness
    }

    pub fn get(&self, index: usize) -> Option<QValue> {
        self.values.get(index).map(|&raw| QValue {
            raw,
            precision: self.precision,
            signedness: self.signedness,
        })
    }

    /// Smallest precision that still holds every element.
    pub fn measured_precision(&self) -> Precision {
        min_precision(&self.values, self.signedness)
    }

    /// Contiguous sub-vector `[start, end)` of the flattened values.
    pub fn slice(&self, start: usize, end: usize) -> QTensor {
        QTensor {
            shape: vec![end - start],
            values: self.values[start..end].to_vec(),
            precision: self.precision,
            signedness: self.signedness,
        }
    }
}
