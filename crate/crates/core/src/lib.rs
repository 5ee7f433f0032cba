//! Stray-field coupling models for STT-MRAM arrays.
//!
//! Each ferromagnetic layer of a perpendicular MTJ is replaced by its rim
//! bound current `I_b = Ms·t`; loop fields are summed by a discretized
//! Biot-Savart integral. On top of that sit the intra-cell stack model, the
//! 3×3 array neighbourhood model with its coupling factor Ψ, compact device
//! metrics (critical current, precessional switching time, thermal
//! stability) and R-H loop characterization.

pub mod array;
pub mod calibration;
pub mod characterization;
pub mod error;
pub mod magnetostatics;
pub mod metrics;
pub mod mtj;
pub mod presets;

pub use error::{Error, ErrorKind, Result};
