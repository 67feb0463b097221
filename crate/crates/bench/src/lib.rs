//! Shared setup for the benchmarks.

use ramanmem::units::Unit;
use ramanmem::{ControlPulse, EnsembleParams, FrequencyConvention, Grid, PulseShape, PulseSpec};

/// Reference ensemble and a 30 GHz Gaussian control sampled on `nz × ntau`.
pub fn reference_setup(nz: usize, ntau: usize) -> (EnsembleParams, ControlPulse, Grid) {
    let conv = FrequencyConvention::Ordinary;
    let w = conv.quoted_to_rad_per_ns(30.0, Unit::GHz).expect("valid energy");
    let spec = PulseSpec::new(PulseShape::Gaussian, 0.3, w).expect("valid pulse");
    let grid = spec.grid_with(nz, ntau);
    let pulse = spec.sample(&grid).expect("resolved pulse");
    (EnsembleParams::reference(conv), pulse, grid)
}
