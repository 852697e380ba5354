use serde::Serialize;

use super::EngineError;
use crate::fixq::BASE_PRECISION;

/// Array dimensions shared by all engines at one design point.
///
/// The baseline processes `activation_lanes` activations against
/// `peak_macs / activation_lanes` filters per cycle. The bit-serial grid has
/// `filter_lanes` rows and `window_columns` columns of units with
/// `activation_lanes` lanes each, consuming `bits_per_cycle` activation bits
/// per lane per cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EngineGeometry {
    filter_lanes: u64,
    activation_lanes: u64,
    window_columns: u64,
    bits_per_cycle: u8,
    peak_macs: u64,
    base_precision: u8,
}

impl EngineGeometry {
    /// Design point matching a baseline of `peak_macs` 16b x 16b MACs per
    /// cycle: `peak_macs` filter rows and `16 / b` window columns.
    pub fn new(peak_macs: u64, bits_per_cycle: u8) -> Result<Self, EngineError> {
        if !matches!(bits_per_cycle, 1 | 2 | 4) {
            return Err(EngineError::InvalidGeometry(format!(
                "bits per cycle must be 1, 2 or 4, got {bits_per_cycle}"
            )));
        }
        EngineGeometry::custom(
            peak_macs,
            16,
            (BASE_PRECISION / bits_per_cycle) as u64,
            bits_per_cycle,
            peak_macs,
            BASE_PRECISION,
        )
    }

    /// The 128-MAC, one-bit-per-cycle configuration.
    pub fn reference() -> Self {
        EngineGeometry::new(128, 1).expect("reference geometry is valid")
    }

    pub fn custom(
        filter_lanes: u64,
        activation_lanes: u64,
        window_columns: u64,
        bits_per_cycle: u8,
        peak_macs: u64,
        base_precision: u8,
    ) -> Result<Self, EngineError> {
        let bad = |msg: String| Err(EngineError::InvalidGeometry(msg));
        if filter_lanes == 0 || activation_lanes == 0 || window_columns == 0 || peak_macs == 0 {
            return bad("dimensions must be positive".into());
        }
        if activation_lanes > crate::sip::MAX_LANES as u64 {
            return bad(format!("{activation_lanes} activation lanes"));
        }
        if bits_per_cycle == 0
            || base_precision == 0
            || !base_precision.is_multiple_of(bits_per_cycle)
        {
            return bad(format!(
                "{bits_per_cycle} bits per cycle does not divide {base_precision}"
            ));
        }
        if !peak_macs.is_multiple_of(activation_lanes) {
            return bad(format!(
                "peak {peak_macs} MACs is not a multiple of {activation_lanes} lanes"
            ));
        }
        Ok(EngineGeometry {
            filter_lanes,
            activation_lanes,
            window_columns,
            bits_per_cycle,
            peak_macs,
            base_precision,
        })
    }

    pub fn filter_lanes(&self) -> u64 {
        self.filter_lanes
    }

    pub fn activation_lanes(&self) -> u64 {
        self.activation_lanes
    }

    pub fn window_columns(&self) -> u64 {
        self.window_columns
    }

    pub fn bits_per_cycle(&self) -> u8 {
        self.bits_per_cycle
    }

    pub fn peak_macs(&self) -> u64 {
        self.peak_macs
    }

    pub fn base_precision(&self) -> u8 {
        self.base_precision
    }

    /// Filters the baseline processes per cycle.
    pub fn dpnn_filters(&self) -> u64 {
        self.peak_macs / self.activation_lanes
    }

    pub fn sip_count(&self) -> u64 {
        self.filter_lanes * self.window_columns
    }

    /// Windows processed concurrently by the activation-serial references.
    pub fn stripes_windows(&self) -> u64 {
        self.base_precision as u64
    }

    /// Cycles one weight bit stays latched in a fully-connected layer.
    pub fn fc_cycles_per_weight_bit(&self) -> u64 {
        (self.base_precision / self.bits_per_cycle) as u64
    }

    /// 1b x 1b products per cycle at full occupancy.
    pub fn peak_bit_products(&self) -> u64 {
        self.sip_count() * self.activation_lanes * self.bits_per_cycle as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_grid_is_128_by_16() {
        let g = EngineGeometry::reference();
        assert_eq!(g.sip_count(), 2048);
        assert_eq!(g.dpnn_filters(), 8);
        // 2048 x 16 x 256 products every 256 cycles equals 128 16-bit MACs.
        assert_eq!(g.peak_bit_products() * 256, 2048 * 16 * 256);
        assert_eq!(g.peak_bit_products(), 256 * g.peak_macs());
    }

    #[test]
    fn multi_bit_variants_have_fewer_columns() {
        for (b, cols) in [(1u8, 16u64), (2, 8), (4, 4)] {
            let g = EngineGeometry::new(128, b).unwrap();
            assert_eq!(g.window_columns(), cols);
            assert_eq!(g.peak_bit_products(), 256 * 128);
        }
        for peak in [32, 64, 256, 512] {
            let g = EngineGeometry::new(peak, 1).unwrap();
            assert_eq!(g.peak_bit_products(), 256 * peak);
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(EngineGeometry::new(128, 3).is_err());
        assert!(EngineGeometry::new(0, 1).is_err());
        assert!(EngineGeometry::new(100, 1).is_err());
        assert!(EngineGeometry::custom(2, 2, 2, 1, 2, 2).is_ok());
    }
}
