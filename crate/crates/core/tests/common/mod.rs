#![allow(dead_code)]

use ramanmem::units::Unit;
use ramanmem::{ControlPulse, EnsembleParams, FrequencyConvention, Grid, PulseShape, PulseSpec};

pub const CONV: FrequencyConvention = FrequencyConvention::Ordinary;

pub fn ghz(v: f64) -> f64 {
    CONV.quoted_to_rad_per_ns(v, Unit::GHz).unwrap()
}

pub fn reference_params() -> EnsembleParams {
    EnsembleParams::reference(CONV)
}

pub fn pulse_spec(shape: PulseShape, energy_ghz: f64) -> PulseSpec {
    PulseSpec::new(shape, 0.3, ghz(energy_ghz)).unwrap()
}

/// Reference pulse sampled on a grid with `nz × ntau` points.
pub fn setup(shape: PulseShape, nz: usize, ntau: usize) -> (PulseSpec, Grid, ControlPulse) {
    let spec = pulse_spec(shape, 30.0);
    let grid = spec.grid_with(nz, ntau);
    let pulse = spec.sample(&grid).unwrap();
    (spec, grid, pulse)
}
