//! Simulation models for precision-scalable bit-serial CNN accelerators.
//!
//! The crate is organised bottom-up:
//!
//! * [`fixq`]: fixed-point values, precisions and minimal-width measurement.
//! * [`bitpack`]: bit-plane interleaved storage, the output transposer and
//!   footprint accounting.
//! * [`sip`]: a bit-exact model of one serial inner-product unit.
//! * [`engines`]: cycle models for the bit-parallel baseline, the bit-serial
//!   grid (1, 2 and 4 activation bits per cycle) and the activation-only
//!   Stripes/DStripes references, plus a functional grid simulator.
//! * [`dynprec`]: runtime precision detectors and the effective weight
//!   precision estimator.
//! * [`netspec`]: network descriptions and the built-in precision profiles.

pub mod bitpack;
pub mod dynprec;
pub mod engines;
pub mod fixq;
pub mod netspec;
pub mod sip;

pub use fixq::{Precision, QTensor, QValue, Signedness};
