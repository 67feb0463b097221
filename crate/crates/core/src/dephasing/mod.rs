//! Larmor dephasing of the stored Raman coherence between the F=4 and F=3
//! ground-state manifolds of caesium.
//!
//! Storage maps an atom in |F_i, m_i⟩ onto the coherence operator
//! `Σ = Σ C(m_i, m_f) |F_i m_i⟩⟨F_f m_f|`. A static field of strength B
//! along (θ, φ) precesses both manifolds with `U = R†ER`, and the relative
//! retrieval efficiency after a time t is
//!
//! ```text
//! η(t) ∝ Σ_m p_m |⟨F_i m| U†ΣUΣ† |F_i m⟩|²
//! ```
//!
//! The quantization axis is vertical. θ is measured from it and φ from the
//! propagation direction of the beams.

mod clebsch;
mod spin;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use clebsch::{clebsch_gordan, wigner_6j};
pub use spin::{spin_matrices, SpinManifold};

use crate::error::{invalid, Error, Result};
use crate::params::MagneticField;
use crate::units::LARMOR_RAD_PER_NS_PER_GAUSS;

/// Caesium nuclear spin.
const NUCLEAR_SPIN: f64 = 3.5;
/// Ground and excited electronic angular momenta of the D2 line.
const J_GROUND: f64 = 0.5;
const J_EXCITED: f64 = 1.5;
const F_EXCITED: [f64; 4] = [2.0, 3.0, 4.0, 5.0];

/// Which of the two linear polarizations lies along the vertical
/// quantization axis.
///
/// In the memory the signal is absorbed out of F=4 and the control
/// connects the excited state to F=3. With the control vertical (the
/// default), the control leg is a π transition and the signal leg is the
/// σ₊ + σ₋ superposition of a horizontal polarization. `SignalVertical`
/// swaps the two legs. With the excited levels weighted equally only the
/// vector part of the two-photon operator connects F=4 to F=3, so the two
/// choices give the same coupling up to an overall sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolarizationConfig {
    #[default]
    ControlVertical,
    SignalVertical,
}

impl fmt::Display for PolarizationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolarizationConfig::ControlVertical => "control-vertical",
            PolarizationConfig::SignalVertical => "signal-vertical",
        })
    }
}

impl FromStr for PolarizationConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "control-vertical" => Ok(PolarizationConfig::ControlVertical),
            "signal-vertical" => Ok(PolarizationConfig::SignalVertical),
            other => Err(invalid(
                "polarization",
                format!("unsupported configuration `{other}` (expected control-vertical or signal-vertical)"),
            )),
        }
    }
}

/// `⟨F' m'| d_q |F m⟩` on the D2 line, in units of the reduced element
/// `⟨J'‖d‖J⟩`.
fn dipole(fp: f64, mp: f64, f: f64, m: f64, q: f64) -> f64 {
    let cg = clebsch_gordan(f, m, 1.0, q, fp, mp);
    if cg == 0.0 {
        return 0.0;
    }
    // ⟨F'‖d‖F⟩ in the convention ⟨F'm'|d_q|Fm⟩ = ⟨F m; 1 q|F' m'⟩⟨F'‖d‖F⟩.
    let exponent = (J_GROUND + NUCLEAR_SPIN + fp + 1.0).round() as i64;
    let sign = if exponent % 2 == 0 { 1.0 } else { -1.0 };
    let reduced = sign
        * ((2.0 * f + 1.0) * (2.0 * J_EXCITED + 1.0)).sqrt()
        * wigner_6j(J_EXCITED, fp, NUCLEAR_SPIN, f, J_GROUND, 1.0);
    cg * reduced
}

/// Two-photon coupling `C(m_i, m_f)` between F=4 (rows, m_i = −4..4) and
/// F=3 (columns, m_f = −3..3), normalised to `max|C| = 1`.
///
/// Each entry sums the product of the two dipole elements over the excited
/// hyperfine levels F' = 2..5 with equal weight, which is appropriate when
/// the detuning is much larger than the excited-state splittings.
pub fn coupling_matrix(config: PolarizationConfig) -> DMatrix<f64> {
    let (fi, ff) = (4.0, 3.0);
    let mut c = DMatrix::<f64>::zeros(9, 7);
    for (row, mi) in (-4..=4).enumerate() {
        for (col, mf) in (-3..=3).enumerate() {
            let (mi, mf) = (mi as f64, mf as f64);
            let mut s = 0.0;
            for fp in F_EXCITED {
                for q in [-1.0, 1.0] {
                    s += match config {
                        PolarizationConfig::ControlVertical => {
                            let mp = mi + q;
                            dipole(fp, mp, fi, mi, q) * dipole(fp, mp, ff, mf, 0.0)
                        }
                        PolarizationConfig::SignalVertical => {
                            let mp = mi;
                            dipole(fp, mp, fi, mi, 0.0) * dipole(fp, mp, ff, mf, q)
                        }
                    };
                }
            }
            c[(row, col)] = s;
        }
    }
    let max = c.amax();
    if max > 0.0 {
        c /= max;
    }
    c
}

/// F=4 and F=3 manifolds with their coupling and joint-space operators.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    pub initial: SpinManifold,
    pub final_manifold: SpinManifold,
    pub polarization: PolarizationConfig,
    coupling: DMatrix<f64>,
    sigma: DMatrix<C64>,
    x: [DMatrix<C64>; 2],
    y: [DMatrix<C64>; 2],
    /// m·g·ω_L per basis state of the joint space, in rad/ns per gauss.
    phase_rates: Vec<f64>,
}

impl SpinSystem {
    pub fn new(polarization: PolarizationConfig) -> Result<Self> {
        let initial = SpinManifold::new(4.0, 0.25)?;
        let final_manifold = SpinManifold::new(3.0, -0.25)?;
        let coupling = coupling_matrix(polarization);
        let (ni, nf) = (initial.dimension(), final_manifold.dimension());
        let mut sigma = DMatrix::<C64>::zeros(ni + nf, ni + nf);
        for r in 0..ni {
            for c in 0..nf {
                sigma[(r, ni + c)] = C64::new(coupling[(r, c)], 0.0);
            }
        }
        let (xi, yi, _) = spin_matrices(initial.f)?;
        let (xf, yf, _) = spin_matrices(final_manifold.f)?;
        let phase_rates = initial
            .ms()
            .into_iter()
            .map(|m| m * initial.g_factor * LARMOR_RAD_PER_NS_PER_GAUSS)
            .chain(
                final_manifold
                    .ms()
                    .into_iter()
                    .map(|m| m * final_manifold.g_factor * LARMOR_RAD_PER_NS_PER_GAUSS),
            )
            .collect();
        Ok(Self {
            initial,
            final_manifold,
            polarization,
            coupling,
            sigma,
            x: [xi, xf],
            y: [yi, yf],
            phase_rates,
        })
    }

    pub fn dimension(&self) -> usize {
        self.initial.dimension() + self.final_manifold.dimension()
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    /// Σ on the joint space, nonzero only in the initial-row, final-column block.
    pub fn sigma(&self) -> &DMatrix<C64> {
        &self.sigma
    }

    /// `R = exp(iθ(Y sinφ − X cosφ))` on each manifold.
    pub fn rotation(&self, field: &MagneticField) -> DMatrix<C64> {
        let (theta, phi) = (field.theta(), field.phi());
        let n = self.dimension();
        let mut r = DMatrix::<C64>::zeros(n, n);
        let mut offset = 0;
        for (x, y) in self.x.iter().zip(&self.y) {
            let g: DMatrix<C64> = (y * C64::new(phi.sin(), 0.0) - x * C64::new(phi.cos(), 0.0)) * C64::new(theta, 0.0);
            let block = hermitian_exp_i(g);
            let k = block.nrows();
            r.view_mut((offset, offset), (k, k)).copy_from(&block);
            offset += k;
        }
        r
    }

    /// Diagonal of `E = exp(i m g µ_B B t / ħ)`.
    pub fn phase(&self, b_gauss: f64, t_ns: f64) -> DVector<C64> {
        let bt = b_gauss * t_ns;
        DVector::from_iterator(
            self.phase_rates.len(),
            self.phase_rates.iter().map(|k| C64::from_polar(1.0, k * bt)),
        )
    }

    /// Uniform thermal distribution over the initial manifold.
    pub fn uniform_populations(&self) -> Vec<f64> {
        let n = self.initial.dimension();
        vec![1.0 / n as f64; n]
    }

    fn check_populations(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.initial.dimension() {
            return Err(Error::Domain(format!(
                "expected {} populations, got {}",
                self.initial.dimension(),
                p.len()
            )));
        }
        if p.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::Domain("populations must be finite and nonnegative".into()));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("populations must sum to 1, got {s}")));
        }
        Ok(())
    }
}

/// `exp(iG)` for Hermitian `G` through its eigendecomposition.
fn hermitian_exp_i(g: DMatrix<C64>) -> DMatrix<C64> {
    let eig = g.symmetric_eigen();
    let v = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|l| C64::from_polar(1.0, *l)),
    ));
    v * d * v.adjoint()
}

/// `U = R†ER` for a field held for `t_ns` nanoseconds.
pub fn evolution_operator(field: &MagneticField, t_ns: f64, system: &SpinSystem) -> DMatrix<C64> {
    Precession::new(system, field).evolution(t_ns)
}

/// Rotation for one field orientation, reused across storage times.
#[derive(Debug, Clone)]
pub struct Precession<'a> {
    system: &'a SpinSystem,
    b_gauss: f64,
    rotation: DMatrix<C64>,
    rotation_adj: DMatrix<C64>,
    sigma_adj: DMatrix<C64>,
}

impl<'a> Precession<'a> {
    pub fn new(system: &'a SpinSystem, field: &MagneticField) -> Self {
        let rotation = system.rotation(field);
        Self {
            system,
            b_gauss: field.b_gauss(),
            rotation_adj: rotation.adjoint(),
            rotation,
            sigma_adj: system.sigma.adjoint(),
        }
    }

    pub fn evolution(&self, t_ns: f64) -> DMatrix<C64> {
        let e = self.system.phase(self.b_gauss, t_ns);
        let mut er = self.rotation.clone();
        for (mut row, ph) in er.row_iter_mut().zip(e.iter()) {
            row *= *ph;
        }
        &self.rotation_adj * er
    }

    /// Unnormalised `Σ_m p_m |⟨m|U†ΣUΣ†|m⟩|²`.
    pub fn eta(&self, t_ns: f64, populations: &[f64]) -> f64 {
        let u = self.evolution(t_ns);
        let m = u.adjoint() * &self.system.sigma * &u * &self.sigma_adj;
        populations
            .iter()
            .enumerate()
            .map(|(k, p)| p * m[(k, k)].norm_sqr())
            .sum()
    }
}

/// Unnormalised retrieval efficiency after storage time `t_ns`.
pub fn retrieval_efficiency(t_ns: f64, field: &MagneticField, system: &SpinSystem, populations: &[f64]) -> Result<f64> {
    system.check_populations(populations)?;
    if !(t_ns >= 0.0) || !t_ns.is_finite() {
        return Err(Error::Domain(format!(
            "storage time must be finite and >= 0, got {t_ns}"
        )));
    }
    Ok(Precession::new(system, field).eta(t_ns, populations))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EfficiencyPoint {
    pub t_ns: f64,
    pub eta_relative: f64,
    pub eta_scaled: f64,
}

/// `scale · η(t)/η(0)` at each requested time.
pub fn efficiency_curve(
    t_values: &[f64],
    field: &MagneticField,
    system: &SpinSystem,
    populations: &[f64],
    scale: f64,
) -> Result<Vec<EfficiencyPoint>> {
    if t_values.is_empty() {
        return Err(Error::Precondition("time list is empty".into()));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(invalid("scale", format!("must be positive, got {scale}")));
    }
    system.check_populations(populations)?;
    if let Some(t) = t_values.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(Error::Domain(format!("storage time must be finite and >= 0, got {t}")));
    }
    let pr = Precession::new(system, field);
    let eta0 = pr.eta(0.0, populations);
    if !(eta0 > 0.0) {
        return Err(Error::Domain(
            "zero retrieval efficiency at t = 0 for these populations".into(),
        ));
    }
    Ok(t_values
        .par_iter()
        .map(|&t| {
            let rel = pr.eta(t, populations) / eta0;
            EfficiencyPoint {
                t_ns: t,
                eta_relative: rel,
                eta_scaled: scale * rel,
            }
        })
        .collect())
}

/// First time at which η(t)/η(0) drops to 1/e, searched up to `t_max_ns`.
///
/// Returns `None` when the curve stays above 1/e on the whole interval,
/// which is always the case without a field.
pub fn lifetime_1e(
    field: &MagneticField,
    system: &SpinSystem,
    populations: &[f64],
    t_max_ns: f64,
) -> Result<Option<f64>> {
    system.check_populations(populations)?;
    if !(t_max_ns > 0.0) || !t_max_ns.is_finite() {
        return Err(invalid("t_max", format!("must be positive, got {t_max_ns}")));
    }
    let pr = Precession::new(system, field);
    let eta0 = pr.eta(0.0, populations);
    let target = (-1.0f64).exp();
    let f = |t: f64| pr.eta(t, populations) / eta0 - target;
    // 1 ns steps resolve Larmor beats for fields far above the ones of interest.
    let steps = (t_max_ns.ceil() as usize).clamp(1000, 200_000);
    let h = t_max_ns / steps as f64;
    let mut prev = 0.0;
    for k in 1..=steps {
        let t = k as f64 * h;
        if f(t) <= 0.0 {
            let (mut lo, mut hi) = (prev, t);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(Some(0.5 * (lo + hi)));
        }
        prev = t;
    }
    Ok(None)
}

/// Field orientation of (θ, φ) mapped to the representative with
/// θ ∈ [0, π/2] and φ ∈ [0, π).
///
/// η is unchanged by φ → φ + π and by (θ, φ) → (π − θ, −φ), so fitted
/// orientations are only defined up to these two maps.
pub fn canonical_orientation(theta: f64, phi: f64) -> (f64, f64) {
    use std::f64::consts::{FRAC_PI_2, PI};
    let (theta, phi) = if theta > FRAC_PI_2 {
        (PI - theta, -phi)
    } else {
        (theta, phi)
    };
    (theta, phi.rem_euclid(PI))
}
