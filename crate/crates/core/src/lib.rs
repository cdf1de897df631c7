//! Optimal two-setting Bell measurements for translationally invariant spin
//! chains.
//!
//! The numerical core is generic over the real scalar type; the aliases
//! below fix it to `f64`, which is what the command-line tool uses.

pub mod error;
pub mod bellop;
pub mod geometry;
pub mod indicators;
pub mod linalg;
pub mod models;
pub mod optimizer;
pub mod scalar;

pub use error::{Error, Result};

pub type Angles = geometry::BlochAngles<f64>;
pub type Vector = geometry::UnitVector<f64>;
pub type Settings = geometry::MeasurementSettings<f64>;
pub type Mps = models::UniformMps<f64>;
pub type GroundState = models::FiniteGroundState<f64>;
pub type Spectrum = bellop::TransferSpectrum<f64>;
pub type Optimum = optimizer::OptResult<f64>;
pub type Record = indicators::SweepRecord<f64>;
