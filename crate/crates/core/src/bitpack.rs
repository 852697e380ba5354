//! Bit-interleaved tensor storage.
//!
//! A [`PackedStream`] stores values one bit-plane at a time: plane 0 holds
//! bit 0 of every value, plane 1 holds bit 1, and so on up to the declared
//! precision. Values are laid out in rows of `group_width` lanes; the last
//! row is zero padded. Within a plane, bit `j` lives in bit `j % 8` of byte
//! `j / 8`.
//!
//! The serialized form is a little-endian header followed by the planes:
//!
//! ```text
//! count: u32 | group_width: u16 | precision: u8 | signedness: u8 (1 = signed)
//! plane 0 bytes | plane 1 bytes | ... | plane P-1 bytes
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::fixq::{FixqError, Precision, QTensor, Signedness, BASE_PRECISION};

/// Header size of the serialized stream in bytes.
pub const HEADER_BYTES: usize = 8;

/// Lanes per weight row: one bit per weight for 128 filters x 16 lanes.
pub const WEIGHT_GROUP_WIDTH: usize = 2048;
/// Lanes per activation row: 16 windows x 16 lanes.
pub const ACTIVATION_GROUP_WIDTH: usize = 256;

#[derive(Debug, Error)]
pub enum PackError {
    #[error("malformed stream: {0}")]
    MalformedStream(String),
    #[error("group width must be in [1, 65535], got {0}")]
    InvalidGroupWidth(usize),
    #[error(transparent)]
    Value(#[from] FixqError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedStream {
    count: usize,
    group_width: usize,
    precision: Precision,
    signedness: Signedness,
    planes: Vec<Vec<u8>>,
}

impl PackedStream {
    /// Assembles a stream from raw planes without checking them; [`unpack`]
    /// reports inconsistent layouts as [`PackError::MalformedStream`].
    pub fn from_raw_parts(
        count: usize,
        group_width: usize,
        precision: Precision,
        signedness: Signedness,
        planes: Vec<Vec<u8>>,
    ) -> Self {
        PackedStream {
            count,
            group_width,
            precision,
            signedness,
            planes,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn group_width(&self) -> usize {
        self.group_width
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn signedness(&self) -> Signedness {
        self.signedness
    }

    pub fn planes(&self) -> &[Vec<u8>] {
        &self.planes
    }

    pub fn rows(&self) -> usize {
        self.count.div_ceil(self.group_width.max(1))
    }

    /// Bits per plane including row padding.
    pub fn plane_bits(&self) -> usize {
        self.rows() * self.group_width
    }

    /// Total payload bits: `rows * group_width * P`.
    pub fn stored_bits(&self) -> u64 {
        (self.plane_bits() * self.precision.bits() as usize) as u64
    }

    /// Bits the same values occupy in a `base`-bit row-padded layout.
    pub fn baseline_bits(&self, base: Precision) -> u64 {
        (self.plane_bits() * base.bits() as usize) as u64
    }

    pub fn bit(&self, plane: usize, index: usize) -> bool {
        self.planes[plane][index / 8] >> (index % 8) & 1 == 1
    }

    fn validate(&self) -> Result<(), PackError> {
        if self.group_width == 0 {
            return Err(PackError::MalformedStream("zero group width".into()));
        }
        if self.planes.len() != self.precision.bits() as usize {
            return Err(PackError::MalformedStream(format!(
                "{} planes for precision {}",
                self.planes.len(),
                self.precision
            )));
        }
        let expected = self.plane_bits().div_ceil(8);
        if let Some((i, plane)) = self
            .planes
            .iter()
            .enumerate()
            .find(|(_, plane)| plane.len() != expected)
        {
            return Err(PackError::MalformedStream(format!(
                "plane {i} has {} bytes, expected {expected}",
                plane.len()
            )));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), PackError> {
        self.validate()?;
        let count = u32::try_from(self.count)
            .map_err(|_| PackError::MalformedStream("count exceeds u32".into()))?;
        let width = u16::try_from(self.group_width)
            .map_err(|_| PackError::InvalidGroupWidth(self.group_width))?;
        out.write_all(&count.to_le_bytes())?;
        out.write_all(&width.to_le_bytes())?;
        out.write_all(&[self.precision.bits(), self.signedness.is_signed() as u8])?;
        for plane in &self.planes {
            out.write_all(plane)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, PackError> {
        let mut buf = Vec::with_capacity(HEADER_BYTES + self.stored_bits() as usize / 8 + 1);
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, PackError> {
        let mut header = [0u8; HEADER_BYTES];
        input.read_exact(&mut header).map_err(truncated)?;
        let count = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
        let group_width = u16::from_le_bytes(header[4..6].try_into().unwrap()) as usize;
        let precision = Precision::new(header[6])
            .map_err(|_| PackError::MalformedStream(format!("precision byte {}", header[6])))?;
        let signedness = match header[7] {
            0 => Signedness::Unsigned,
            1 => Signedness::Signed,
            other => {
                return Err(PackError::MalformedStream(format!(
                    "signedness flag {other}"
                )))
            }
        };
        if group_width == 0 {
            return Err(PackError::MalformedStream("zero group width".into()));
        }
        let plane_bytes = (count.div_ceil(group_width) * group_width).div_ceil(8);
        let mut planes = Vec::with_capacity(precision.bits() as usize);
        for _ in 0..precision.bits() {
            let mut plane = vec![0u8; plane_bytes];
            input.read_exact(&mut plane).map_err(truncated)?;
            planes.push(plane);
        }
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            return Err(PackError::MalformedStream("trailing bytes".into()));
        }
        Ok(PackedStream {
            count,
            group_width,
            precision,
            signedness,
            planes,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PackError> {
        PackedStream::read_from(bytes)
    }
}

fn truncated(e: io::Error) -> PackError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        PackError::MalformedStream("truncated stream".into())
    } else {
        PackError::Io(e)
    }
}

/// Packs a tensor plane by plane at its declared precision.
pub fn pack(tensor: &QTensor, group_width: usize) -> Result<PackedStream, PackError> {
    if group_width == 0 || group_width > u16::MAX as usize {
        return Err(PackError::InvalidGroupWidth(group_width));
    }
    let count = tensor.len();
    let precision = tensor.precision();
    let plane_bits = count.div_ceil(group_width) * group_width;
    let mut planes = vec![vec![0u8; plane_bits.div_ceil(8)]; precision.bits() as usize];
    for (j, &v) in tensor.values().iter().enumerate() {
        let bits = v as u32;
        for (i, plane) in planes.iter_mut().enumerate() {
            plane[j / 8] |= ((bits >> i & 1) as u8) << (j % 8);
        }
    }
    Ok(PackedStream {
        count,
        group_width,
        precision,
        signedness: tensor.signedness(),
        planes,
    })
}

/// Reassembles the first `count` values of a stream; padding is dropped.
pub fn unpack(stream: &PackedStream, signedness: Signedness) -> Result<QTensor, PackError> {
    stream.validate()?;
    let bits = stream.precision.bits() as u32;
    let values = (0..stream.count)
        .map(|j| {
            let raw = (0..bits).fold(0u32, |acc, i| acc | (stream.bit(i as usize, j) as u32) << i);
            match signedness {
                Signedness::Signed => ((raw << (32 - bits)) as i32) >> (32 - bits),
                Signedness::Unsigned => raw as i32,
            }
        })
        .collect();
    if stream.count == 0 {
        return Ok(QTensor::vector(values, stream.precision, signedness)?);
    }
    Ok(QTensor::new(
        vec![stream.count],
        values,
        stream.precision,
        signedness,
    )?)
}

/// A 16x16 bit matrix; bit `j` of row `i` is element `(i, j)`.
pub type BitTile = [u16; 16];

/// Transposes a 16x16 bit tile with log-step block swaps.
pub fn transpose_tile(tile: &BitTile) -> BitTile {
    let mut m = *tile;
    let mut width = 8usize;
    let mut mask: u16 = 0x00FF;
    while width != 0 {
        let mut row = 0;
        while row < 16 {
            for k in row..row + width {
                // Swap the upper-right block of the lower rows with the
                // lower-left block of the upper rows.
                let t = ((m[k] >> width) ^ m[k + width]) & mask;
                m[k] ^= t << width;
                m[k + width] ^= t;
            }
            row += 2 * width;
        }
        width >>= 1;
        mask ^= mask << width;
    }
    m
}

/// Output transposer: turns 16 bit-parallel output values into 16 bit-planes
/// ready to be written to activation memory.
pub fn values_to_planes(values: &[u16; 16]) -> BitTile {
    transpose_tile(values)
}

/// Fraction of bits saved by storing at `precision` instead of `base`.
pub fn bits_saved_fraction(precision: Precision, base: Precision) -> f64 {
    debug_assert!(precision <= base);
    (base.bits() as f64 - precision.bits() as f64) / base.bits() as f64
}

/// Savings relative to the 16-bit baseline.
pub fn bits_saved_vs_base(precision: Precision) -> f64 {
    bits_saved_fraction(precision, Precision::of(BASE_PRECISION))
}

/// Storage for `count` values at `precision` in rows of `group_width`.
pub fn stored_bits(count: u64, group_width: u64, precision: Precision) -> u64 {
    count.div_ceil(group_width) * group_width * precision.bits() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(b: u8) -> Precision {
        Precision::of(b)
    }

    fn naive_transpose(tile: &BitTile) -> BitTile {
        let mut out = [0u16; 16];
        for (i, row) in tile.iter().enumerate() {
            for (j, out_row) in out.iter_mut().enumerate() {
                *out_row |= (row >> j & 1) << i;
            }
        }
        out
    }

    #[test]
    fn pack_2k_13bit_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let values: Vec<i32> = (0..2048).map(|_| rng.random_range(-4096..4096)).collect();
        let t = QTensor::new(vec![2048], values, p(13), Signedness::Signed).unwrap();
        let s = pack(&t, WEIGHT_GROUP_WIDTH).unwrap();
        assert_eq!(s.planes().len(), 13);
        assert!(s.planes().iter().all(|pl| pl.len() * 8 == 2048));
        assert_eq!(s.stored_bits() * 16, s.baseline_bits(Precision::BASE) * 13);
        assert_eq!(
            s.stored_bits() as f64 / s.baseline_bits(Precision::BASE) as f64,
            0.8125
        );
    }

    #[test]
    fn pack_single_zero() {
        let t = QTensor::new(vec![1], vec![0], p(1), Signedness::Unsigned).unwrap();
        let s = pack(&t, 1).unwrap();
        assert_eq!(s.planes().len(), 1);
        assert_eq!(s.plane_bits(), 1);
        assert!(!s.bit(0, 0));
        assert_eq!(s.stored_bits(), 1);
    }

    #[test]
    fn plane_layout_is_lsb_first() {
        let t = QTensor::new(vec![3], vec![1, 2, 3], p(2), Signedness::Unsigned).unwrap();
        let s = pack(&t, 4).unwrap();
        assert_eq!(s.planes()[0], vec![0b0101]);
        assert_eq!(s.planes()[1], vec![0b0110]);
    }

    #[test]
    fn unpack_examples() {
        let s =
            PackedStream::from_raw_parts(1, 1, p(2), Signedness::Signed, vec![vec![1], vec![1]]);
        assert_eq!(unpack(&s, Signedness::Signed).unwrap().values(), &[-1]);
        let s =
            PackedStream::from_raw_parts(1, 1, p(2), Signedness::Unsigned, vec![vec![1], vec![0]]);
        assert_eq!(unpack(&s, Signedness::Unsigned).unwrap().values(), &[1]);
    }

    #[test]
    fn unpack_rejects_ragged_planes() {
        let s = PackedStream::from_raw_parts(
            9,
            8,
            p(2),
            Signedness::Unsigned,
            vec![vec![0, 0], vec![0]],
        );
        assert!(matches!(
            unpack(&s, Signedness::Unsigned),
            Err(PackError::MalformedStream(_))
        ));
        let s =
            PackedStream::from_raw_parts(1, 8, p(3), Signedness::Unsigned, vec![vec![0], vec![0]]);
        assert!(matches!(
            unpack(&s, Signedness::Unsigned),
            Err(PackError::MalformedStream(_))
        ));
    }

    #[test]
    fn roundtrip_1000_random_7bit_signed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1000);
        let values: Vec<i32> = (0..1000).map(|_| rng.random_range(-64..64)).collect();
        let t = QTensor::new(vec![1000], values, p(7), Signedness::Signed).unwrap();
        let s = pack(&t, ACTIVATION_GROUP_WIDTH).unwrap();
        assert_eq!(s.rows(), 4);
        assert_eq!(unpack(&s, Signedness::Signed).unwrap(), t);
    }

    #[test]
    fn serialized_layout() {
        let t = QTensor::new(vec![3], vec![1, -2, 3], p(3), Signedness::Signed).unwrap();
        let bytes = pack(&t, 3).unwrap().to_bytes().unwrap();
        // 1 = 001, -2 = 110, 3 = 011
        assert_eq!(bytes, vec![3, 0, 0, 0, 3, 0, 3, 1, 0b101, 0b110, 0b010]);
        let back = PackedStream::from_bytes(&bytes).unwrap();
        assert_eq!(unpack(&back, Signedness::Signed).unwrap(), t);
    }

    #[test]
    fn truncated_and_trailing_bytes_rejected() {
        let t = QTensor::new(vec![3], vec![1, 2, 3], p(3), Signedness::Unsigned).unwrap();
        let mut bytes = pack(&t, 3).unwrap().to_bytes().unwrap();
        assert!(matches!(
            PackedStream::from_bytes(&bytes[..bytes.len() - 1]),
            Err(PackError::MalformedStream(_))
        ));
        bytes.push(0);
        assert!(matches!(
            PackedStream::from_bytes(&bytes),
            Err(PackError::MalformedStream(_))
        ));
        let mut bad = pack(&t, 3).unwrap().to_bytes().unwrap();
        bad[6] = 17;
        assert!(PackedStream::from_bytes(&bad).is_err());
    }

    #[test]
    fn transpose_examples() {
        let diag: BitTile = std::array::from_fn(|i| 1 << i);
        assert_eq!(transpose_tile(&diag), diag);
        let mut single = [0u16; 16];
        single[3] = 1 << 7;
        let t = transpose_tile(&single);
        let mut expected = [0u16; 16];
        expected[7] = 1 << 3;
        assert_eq!(t, expected);
    }

    #[test]
    fn output_transposer_yields_planes() {
        let values: [u16; 16] = std::array::from_fn(|i| (i as u16) * 4099);
        let planes = values_to_planes(&values);
        for (bit, plane) in planes.iter().enumerate() {
            for (lane, &v) in values.iter().enumerate() {
                assert_eq!(plane >> lane & 1, v >> bit & 1);
            }
        }
    }

    #[test]
    fn saved_fraction_examples() {
        assert_eq!(bits_saved_vs_base(p(16)), 0.0);
        assert_eq!(bits_saved_vs_base(p(11)), 0.3125);
        assert_eq!(bits_saved_vs_base(p(13)), 0.1875);
        assert_eq!(stored_bits(2048, 2048, p(13)), 2048 * 13);
        assert_eq!(stored_bits(2049, 2048, p(1)), 4096);
    }

    proptest! {
        #[test]
        fn pack_unpack_roundtrip(bits in 1u8..=16, signed: bool, width in 1usize..300,
                                 seeds in prop::collection::vec(any::<u32>(), 1..600)) {
            let s = if signed { Signedness::Signed } else { Signedness::Unsigned };
            let prec = p(bits);
            let lo = s.min_value(prec);
            let span = (s.max_value(prec) - lo + 1) as u64;
            let values: Vec<i32> = seeds.iter().map(|&r| (lo + (r as u64 % span) as i64) as i32).collect();
            let t = QTensor::new(vec![values.len()], values, prec, s).unwrap();
            let packed = pack(&t, width).unwrap();
            prop_assert_eq!(packed.stored_bits(), stored_bits(t.len() as u64, width as u64, prec));
            let bytes = packed.to_bytes().unwrap();
            let back = unpack(&PackedStream::from_bytes(&bytes).unwrap(), s).unwrap();
            prop_assert_eq!(back, t);
        }

        #[test]
        fn transpose_matches_naive(tile in any::<[u16; 16]>()) {
            let t = transpose_tile(&tile);
            prop_assert_eq!(t, naive_transpose(&tile));
            prop_assert_eq!(transpose_tile(&t), tile);
            let ones = |m: &BitTile| m.iter().map(|r| r.count_ones()).sum::<u32>();
            prop_assert_eq!(ones(&t), ones(&tile));
        }
    }
}
