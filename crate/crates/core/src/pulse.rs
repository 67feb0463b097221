//! Control-pulse envelopes tabulated on the τ grid.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::params::{trapezoid_weights, Grid};

/// Named envelope shapes. The FWHM always refers to the intensity `|Ω|²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseShape {
    Gaussian,
    Square,
    Sech2,
}

impl PulseShape {
    /// Unnormalised intensity profile `|Ω(τ)|²` for a pulse centred at zero.
    fn intensity(self, tau: f64, fwhm: f64) -> f64 {
        match self {
            PulseShape::Gaussian => {
                let x = tau / fwhm;
                (-4.0 * std::f64::consts::LN_2 * x * x).exp()
            }
            PulseShape::Square => {
                if tau.abs() <= 0.5 * fwhm {
                    1.0
                } else {
                    0.0
                }
            }
            PulseShape::Sech2 => {
                let tau0 = fwhm / (2.0 * (2.0f64.sqrt()).acosh());
                let s = 1.0 / (tau / tau0).cosh();
                s * s
            }
        }
    }

    /// Half-width (in units of FWHM) outside which `|Ω| < 10⁻⁶ max|Ω|`.
    fn containment_half_width(self) -> f64 {
        match self {
            // sqrt(|Ω|²) < 1e-6  <=>  intensity < 1e-12
            PulseShape::Gaussian => (12.0 * std::f64::consts::LN_10 / (4.0 * std::f64::consts::LN_2)).sqrt(),
            PulseShape::Square => 0.5,
            PulseShape::Sech2 => {
                let tau0_per_fwhm = 1.0 / (2.0 * (2.0f64.sqrt()).acosh());
                (2e6f64).ln() * tau0_per_fwhm
            }
        }
    }
}

impl fmt::Display for PulseShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PulseShape::Gaussian => "gaussian",
            PulseShape::Square => "square",
            PulseShape::Sech2 => "sech2",
        })
    }
}

impl FromStr for PulseShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(PulseShape::Gaussian),
            "square" => Ok(PulseShape::Square),
            "sech2" => Ok(PulseShape::Sech2),
            other => Err(invalid("shape", format!("unknown pulse shape `{other}`"))),
        }
    }
}

/// Shape selection plus duration and energy, before sampling on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub shape: PulseShape,
    /// Intensity FWHM in ns.
    pub fwhm: f64,
    /// W = ∫|Ω|² dτ in rad²/ns.
    pub energy: f64,
}

impl PulseSpec {
    pub fn new(shape: PulseShape, fwhm: f64, energy: f64) -> Result<Self> {
        if !(fwhm > 0.0 && fwhm.is_finite()) {
            return Err(invalid("fwhm", format!("must be positive, got {fwhm}")));
        }
        if !(energy >= 0.0 && energy.is_finite()) {
            return Err(invalid("energy", format!("must be finite and >= 0, got {energy}")));
        }
        Ok(Self { shape, fwhm, energy })
    }

    /// Grid with the default point counts whose τ span is 8× the FWHM,
    /// widened when the shape's tails need more room.
    pub fn default_grid(&self) -> Grid {
        self.grid_with(Grid::DEFAULT_NZ, Grid::DEFAULT_NTAU)
    }

    pub fn grid_with(&self, nz: usize, ntau: usize) -> Grid {
        let half = (4.0f64).max(1.05 * self.shape.containment_half_width()) * self.fwhm;
        Grid {
            nz,
            ntau,
            tau_span: (-half, half),
        }
    }

    /// Samples the envelope on `grid`, scaled so the trapezoidal energy is exact.
    ///
    /// The square envelope is sampled as the mean intensity over each node's
    /// dual cell, so edges between nodes keep their position instead of
    /// snapping to the nearest node. The solver still converges only at first
    /// order in dτ across a discontinuous control.
    pub fn sample(&self, grid: &Grid) -> Result<ControlPulse> {
        grid.validate()?;
        let h = grid.dtau();
        let (lo, hi) = grid.tau_span;
        let half = 0.5 * self.fwhm;
        let samples: Vec<Complex64> = grid
            .taus()
            .into_iter()
            .map(|t| {
                let intensity = match self.shape {
                    PulseShape::Square => {
                        let (a, b) = ((t - 0.5 * h).max(lo), (t + 0.5 * h).min(hi));
                        ((b.min(half) - a.max(-half)).max(0.0)) / (b - a)
                    }
                    shape => shape.intensity(t, self.fwhm),
                };
                Complex64::new(intensity.sqrt(), 0.0)
            })
            .collect();
        let raw = trapezoid_energy(&samples, grid.dtau());
        if raw <= 0.0 {
            if self.energy == 0.0 {
                return ControlPulse::from_samples(grid, samples.iter().map(|_| Complex64::new(0.0, 0.0)).collect());
            }
            return Err(invalid("fwhm", "pulse falls between grid points"));
        }
        let scale = (self.energy / raw).sqrt();
        let samples = samples.into_iter().map(|s| s * scale).collect();
        let mut pulse = ControlPulse::from_samples(grid, samples)?;
        pulse.energy = self.energy;
        pulse.fwhm = self.fwhm;
        Ok(pulse)
    }
}

/// Complex Rabi-frequency envelope Ω(τ) on a uniform τ grid (rad/ns).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPulse {
    tau_min: f64,
    dtau: f64,
    samples: Vec<Complex64>,
    energy: f64,
    fwhm: f64,
}

impl ControlPulse {
    /// Wraps samples taken on the τ points of `grid`.
    pub fn from_samples(grid: &Grid, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.ntau {
            return Err(Error::Shape(format!(
                "pulse has {} samples, grid has {} time points",
                samples.len(),
                grid.ntau
            )));
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(invalid("shape", "non-finite Rabi frequency sample"));
        }
        let dtau = grid.dtau();
        let energy = trapezoid_energy(&samples, dtau);
        let fwhm = measured_fwhm(&samples, dtau);
        Ok(Self {
            tau_min: grid.tau_span.0,
            dtau,
            samples,
            energy,
            fwhm,
        })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    /// W = ∫|Ω|² dτ.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Intensity FWHM in ns.
    pub fn fwhm(&self) -> f64 {
        self.fwhm
    }

    pub fn max_rabi(&self) -> f64 {
        self.samples.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    pub fn tau_min(&self) -> f64 {
        self.tau_min
    }

    pub fn dtau(&self) -> f64 {
        self.dtau
    }

    pub(crate) fn matches(&self, grid: &Grid) -> bool {
        self.samples.len() == grid.ntau
            && (self.tau_min - grid.tau_span.0).abs() <= 1e-12 * (1.0 + grid.tau_span.0.abs())
            && (self.dtau - grid.dtau()).abs() <= 1e-12 * grid.dtau()
    }

    /// True if `|Ω| < 10⁻⁶ max|Ω|` at both ends of the grid.
    pub fn is_contained(&self) -> bool {
        let max = self.max_rabi();
        let (first, last) = (self.samples[0].norm(), self.samples[self.samples.len() - 1].norm());
        max == 0.0 || (first < 1e-6 * max && last < 1e-6 * max)
    }
}

fn trapezoid_energy(samples: &[Complex64], dtau: f64) -> f64 {
    let w = trapezoid_weights(samples.len(), dtau);
    samples.iter().zip(&w).map(|(s, w)| s.norm_sqr() * w).sum()
}

fn measured_fwhm(samples: &[Complex64], dtau: f64) -> f64 {
    let peak = samples.iter().map(|s| s.norm_sqr()).fold(0.0, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    let above = samples.iter().filter(|s| s.norm_sqr() >= 0.5 * peak).count();
    above as f64 * dtau
}
