//! Parameter records shared by the solver, noise and dephasing modules.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::units::{FrequencyConvention, Unit};

/// Physical constants of the Λ-system, all rates in rad/ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    /// Resonant optical depth.
    pub d: f64,
    /// Homogeneous linewidth of the |1⟩↔|2⟩ transition.
    pub gamma: f64,
    /// Stokes (signal) detuning Δ_S.
    pub delta_s: f64,
    /// Ground-state hyperfine splitting δ.
    pub stokes_shift: f64,
}

impl EnsembleParams {
    pub fn new(d: f64, gamma: f64, delta_s: f64, stokes_shift: f64) -> Result<Self> {
        let p = Self {
            d,
            gamma,
            delta_s,
            stokes_shift,
        };
        p.validate()?;
        Ok(p)
    }

    /// Builds the record from quoted laboratory values: γ in MHz, Δ and δ in GHz.
    pub fn from_quoted(
        d: f64,
        gamma_mhz: f64,
        detuning_ghz: f64,
        stokes_shift_ghz: f64,
        convention: FrequencyConvention,
    ) -> Result<Self> {
        Self::new(
            d,
            convention.quoted_to_rad_per_ns(gamma_mhz, Unit::MHz)?,
            convention.quoted_to_rad_per_ns(detuning_ghz, Unit::GHz)?,
            convention.quoted_to_rad_per_ns(stokes_shift_ghz, Unit::GHz)?,
        )
    }

    /// Caesium vapour cell of the reference experiment: d = 1900,
    /// γ = 16 MHz, Δ = 15 GHz, δ = 9.2 GHz.
    pub fn reference(convention: FrequencyConvention) -> Self {
        Self::from_quoted(1900.0, 16.0, 15.0, 9.2, convention).expect("reference values are valid")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d", self.d),
            ("gamma", self.gamma),
            ("delta_s", self.delta_s),
            ("stokes_shift", self.stokes_shift),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        if self.d < 0.0 {
            return Err(invalid("d", format!("must be non-negative, got {}", self.d)));
        }
        if self.gamma < 0.0 {
            return Err(invalid("gamma", format!("must be non-negative, got {}", self.gamma)));
        }
        if self.stokes_shift < 0.0 {
            return Err(invalid(
                "stokes_shift",
                format!("must be non-negative, got {}", self.stokes_shift),
            ));
        }
        Ok(())
    }

    /// Anti-Stokes detuning Δ_AS = Δ_S + δ.
    pub fn delta_as(&self) -> f64 {
        self.delta_s + self.stokes_shift
    }

    /// Complex detunings `(Γ_S, Γ_AS)` with `Γ = γ − iΔ`.
    pub fn derived_detunings(&self) -> (Complex64, Complex64) {
        (
            Complex64::new(self.gamma, -self.delta_s),
            Complex64::new(self.gamma, -self.delta_as()),
        )
    }
}

/// Free-function form of [`EnsembleParams::derived_detunings`].
pub fn derived_detunings(params: &EnsembleParams) -> (Complex64, Complex64) {
    params.derived_detunings()
}

/// Ground-state populations before the control pulse; `p1 + p3 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpState {
    p1: f64,
    p3: f64,
}

impl PumpState {
    /// Builds the state from the |3⟩ population; `p1 = 1 − p3`.
    pub fn from_p3(p3: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p3) {
            return Err(invalid("p3", format!("must lie in [0, 1], got {p3}")));
        }
        Ok(Self { p1: 1.0 - p3, p3 })
    }

    /// All atoms in |1⟩.
    pub fn all_in_1() -> Self {
        Self { p1: 1.0, p3: 0.0 }
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p3(&self) -> f64 {
        self.p3
    }
}

/// Static magnetic field: strength in gauss and orientation.
///
/// `theta` is measured from the control polarization (vertical) axis and
/// `phi` from the propagation direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagneticField {
    b_gauss: f64,
    theta: f64,
    phi: f64,
}

impl MagneticField {
    /// Angles in radians; they are reduced to `θ ∈ [0, π]`, `φ ∈ [0, 2π)`.
    pub fn new(b_gauss: f64, theta: f64, phi: f64) -> Result<Self> {
        if !(b_gauss >= 0.0 && b_gauss.is_finite()) {
            return Err(invalid("b_gauss", format!("must be finite and >= 0, got {b_gauss}")));
        }
        if !theta.is_finite() || !phi.is_finite() {
            return Err(invalid("theta/phi", "angles must be finite"));
        }
        // Fold theta onto [0, 2π), then reflect (θ, φ) → (2π − θ, φ + π) if needed.
        let mut t = theta.rem_euclid(2.0 * PI);
        let mut p = phi;
        if t > PI {
            t = 2.0 * PI - t;
            p += PI;
        }
        p = p.rem_euclid(2.0 * PI);
        if p >= 2.0 * PI {
            p = 0.0;
        }
        Ok(Self {
            b_gauss,
            theta: t,
            phi: p,
        })
    }

    pub fn from_degrees(b_gauss: f64, theta_deg: f64, phi_deg: f64) -> Result<Self> {
        Self::new(b_gauss, theta_deg.to_radians(), phi_deg.to_radians())
    }

    /// Field of the reference experiment: 0.13 G at θ = 30°, φ = 25°.
    pub fn reference() -> Self {
        Self::from_degrees(0.13, 30.0, 25.0).expect("valid")
    }

    pub fn b_gauss(&self) -> f64 {
        self.b_gauss
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn with_b(&self, b_gauss: f64) -> Result<Self> {
        Self::new(b_gauss, self.theta, self.phi)
    }
}

/// Discretisation of the (z, τ) plane. `z` runs over `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nz: usize,
    pub ntau: usize,
    pub tau_span: (f64, f64),
}

impl Grid {
    pub const DEFAULT_NZ: usize = 200;
    pub const DEFAULT_NTAU: usize = 800;

    pub fn new(nz: usize, ntau: usize, tau_span: (f64, f64)) -> Result<Self> {
        let g = Self { nz, ntau, tau_span };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nz < 2 {
            return Err(invalid("nz", format!("need at least 2 points, got {}", self.nz)));
        }
        if self.ntau < 2 {
            return Err(invalid("ntau", format!("need at least 2 points, got {}", self.ntau)));
        }
        let (a, b) = self.tau_span;
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(invalid(
                "tau_span",
                format!("need finite tau_min < tau_max, got ({a}, {b})"),
            ));
        }
        Ok(())
    }

    pub fn dz(&self) -> f64 {
        1.0 / (self.nz - 1) as f64
    }

    pub fn dtau(&self) -> f64 {
        (self.tau_span.1 - self.tau_span.0) / (self.ntau - 1) as f64
    }

    pub fn tau(&self, j: usize) -> f64 {
        self.tau_span.0 + j as f64 * self.dtau()
    }

    pub fn z(&self, i: usize) -> f64 {
        i as f64 * self.dz()
    }

    pub fn taus(&self) -> Vec<f64> {
        (0..self.ntau).map(|j| self.tau(j)).collect()
    }

    /// Trapezoidal weights on the τ grid.
    pub fn tau_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.ntau, self.dtau())
    }

    /// Trapezoidal weights on the z grid.
    pub fn z_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.nz, self.dz())
    }

    /// Same span with both point counts scaled by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            nz: self.nz * factor,
            ntau: self.ntau * factor,
            tau_span: self.tau_span,
        }
    }
}

pub(crate) fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}
