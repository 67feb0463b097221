//! Simulation and parameter estimation for a far-off-resonant Raman
//! quantum memory in warm vapour.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dephasing;
pub mod error;
pub mod fit;
pub mod mbsolver;
pub mod noise;
pub mod params;
pub mod pulse;
pub mod units;

pub use dephasing::{PolarizationConfig, SpinManifold, SpinSystem};
pub use error::{Error, Result};
pub use fit::{FitOptions, FitResult};
pub use mbsolver::GreensKernels;
pub use noise::{NoiseBudget, NoiseModelParams};
pub use params::{derived_detunings, EnsembleParams, Grid, MagneticField, PumpState};
pub use pulse::{ControlPulse, PulseShape, PulseSpec};
pub use units::{unit_convert, FrequencyConvention, Unit};
