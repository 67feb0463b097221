//! Spontaneous Raman noise floor versus optical pumping.
//!
//! The vacuum-input photon number scattered during one control pulse is
//!
//! ```text
//! S = ∫∫ |G_S|² + |G_AS|²  +  ∫∫ p3 |L_S|² + p1 |L_AS|²
//! ```
//!
//! The `G` terms are four-wave mixing seeded by vacuum fluctuations of the
//! opposite sideband. The `L` terms are spontaneous scattering out of the
//! initial spin-wave fluctuations, weighted by `⟨B†B⟩ = p3` and
//! `⟨BB†⟩ = p1`. The observed floor is `κ·S`, optionally masking the
//! anti-Stokes sideband.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mbsolver::{kernel_quadratures, KernelQuadratures};
use crate::params::{EnsembleParams, Grid, PumpState};
use crate::pulse::ControlPulse;

/// Photons per pulse in each noise channel, before κ scaling.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseBudget {
    pub s_stokes_spont: f64,
    pub s_stokes_fwm: f64,
    pub s_antistokes_spont: f64,
    pub s_antistokes_fwm: f64,
    pub s_total: f64,
}

impl NoiseBudget {
    pub fn new(s_stokes_spont: f64, s_stokes_fwm: f64, s_antistokes_spont: f64, s_antistokes_fwm: f64) -> Self {
        Self {
            s_stokes_spont,
            s_stokes_fwm,
            s_antistokes_spont,
            s_antistokes_fwm,
            s_total: s_stokes_spont + s_stokes_fwm + s_antistokes_spont + s_antistokes_fwm,
        }
    }

    pub fn from_quadratures(q: &KernelQuadratures, pump: &PumpState) -> Self {
        Self::new(pump.p3() * q.l_s, q.g_s, pump.p1() * q.l_as, q.g_as)
    }

    pub fn stokes(&self) -> f64 {
        self.s_stokes_spont + self.s_stokes_fwm
    }

    pub fn antistokes(&self) -> f64 {
        self.s_antistokes_spont + self.s_antistokes_fwm
    }

    /// Sum over the channels that reach the detector.
    pub fn detected(&self, filter_passes_antistokes: bool) -> f64 {
        if filter_passes_antistokes {
            self.s_total
        } else {
            self.stokes()
        }
    }

    /// `(stokes, antistokes)` shares of the total.
    pub fn fractions(&self) -> Result<(f64, f64)> {
        if !(self.s_total > 0.0) {
            return Err(Error::Domain("noise fractions undefined for zero total noise".into()));
        }
        let s = self.stokes() / self.s_total;
        Ok((s, 1.0 - s))
    }
}

/// Saturation power, mode-overlap factor and filter configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModelParams {
    /// Saturation power P_s in mW.
    pub p_sat: f64,
    /// Overlap between the scattered and detected modes.
    pub kappa: f64,
    pub filter_passes_antistokes: bool,
}

impl NoiseModelParams {
    pub fn new(p_sat: f64, kappa: f64, filter_passes_antistokes: bool) -> Result<Self> {
        let m = Self {
            p_sat,
            kappa,
            filter_passes_antistokes,
        };
        m.validate()?;
        Ok(m)
    }

    /// Fitted values of the reference experiment (84 mW, 0.12, both
    /// sidebands transmitted by the etalons).
    pub fn reference() -> Self {
        Self {
            p_sat: 84.0,
            kappa: 0.12,
            filter_passes_antistokes: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_sat > 0.0 && self.p_sat.is_finite()) {
            return Err(invalid("p_sat", format!("must be positive, got {}", self.p_sat)));
        }
        // κ = 0 is accepted as the trivial "nothing collected" limit.
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(invalid("kappa", format!("must lie in (0, 1], got {}", self.kappa)));
        }
        Ok(())
    }
}

/// Populations after optical pumping with signed power `p` (mW).
///
/// Positive powers pump the red |1⟩↔|2⟩ transition and drive atoms into
/// |3⟩; negative powers pump the blue |3⟩↔|2⟩ transition.
pub fn pump_populations(p: f64, p_sat: f64) -> Result<PumpState> {
    if !(p_sat > 0.0 && p_sat.is_finite()) {
        return Err(Error::Domain(format!("saturation power must be positive, got {p_sat}")));
    }
    if !p.is_finite() {
        return Err(Error::Domain(format!("pump power must be finite, got {p}")));
    }
    let x = p / p_sat;
    let p3 = 0.5 * (1.0 + x / (1.0 + x.abs()));
    PumpState::from_p3(p3.clamp(0.0, 1.0))
}

/// Noise budget for one pump state, from a full kernel solve.
pub fn raman_noise(
    params: &EnsembleParams,
    pulse: &ControlPulse,
    pump: &PumpState,
    grid: &Grid,
) -> Result<NoiseBudget> {
    let q = kernel_quadratures(params, pulse, pump, grid)?;
    Ok(NoiseBudget::from_quadratures(&q, pump))
}

/// Raman noise for fixed ensemble, pulse and grid, memoised per pump state.
pub struct NoiseEngine {
    params: EnsembleParams,
    pulse: ControlPulse,
    grid: Grid,
    cache: Mutex<HashMap<(i64, i64), NoiseBudget>>,
}

impl NoiseEngine {
    pub fn new(params: EnsembleParams, pulse: ControlPulse, grid: Grid) -> Result<Self> {
        params.validate()?;
        grid.validate()?;
        Ok(Self {
            params,
            pulse,
            grid,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn params(&self) -> &EnsembleParams {
        &self.params
    }

    pub fn pulse(&self) -> &ControlPulse {
        &self.pulse
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn key(pump: &PumpState) -> (i64, i64) {
        ((pump.p1() * 1e6).round() as i64, (pump.p3() * 1e6).round() as i64)
    }

    pub fn budget(&self, pump: &PumpState) -> Result<NoiseBudget> {
        let key = Self::key(pump);
        if let Some(b) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(*b);
        }
        let b = raman_noise(&self.params, &self.pulse, pump, &self.grid)?;
        // A concurrent solve of the same key produced an identical value.
        Ok(*self.cache.lock().expect("cache lock").entry(key).or_insert(b))
    }

    pub fn cached_states(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    /// Observed photons per pulse at pump power `p`.
    pub fn observed(&self, p: f64, model: &NoiseModelParams) -> Result<f64> {
        model.validate()?;
        let pump = pump_populations(p, model.p_sat)?;
        let b = self.budget(&pump)?;
        Ok(model.kappa * b.detected(model.filter_passes_antistokes))
    }

    pub fn curve(&self, p_values: &[f64], model: &NoiseModelParams) -> Result<Vec<NoiseRow>> {
        model.validate()?;
        if p_values.is_empty() {
            return Err(Error::Precondition("pump power list is empty".into()));
        }
        p_values
            .par_iter()
            .map(|&p| {
                let pump = pump_populations(p, model.p_sat)?;
                let budget = self.budget(&pump)?;
                Ok(NoiseRow {
                    pump_mw: p,
                    p1: pump.p1(),
                    p3: pump.p3(),
                    budget,
                    s_observed: model.kappa * budget.detected(model.filter_passes_antistokes),
                })
            })
            .collect()
    }

    pub fn fraction_curve(&self, p_values: &[f64], p_sat: f64) -> Result<Vec<FractionRow>> {
        if p_values.is_empty() {
            return Err(Error::Precondition("pump power list is empty".into()));
        }
        p_values
            .par_iter()
            .map(|&p| {
                let pump = pump_populations(p, p_sat)?;
                let (s, a) = self.budget(&pump)?.fractions()?;
                Ok(FractionRow {
                    pump_mw: p,
                    stokes_fraction: s,
                    antistokes_fraction: a,
                })
            })
            .collect()
    }
}

/// One row of the noise-versus-pump table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseRow {
    pub pump_mw: f64,
    pub p1: f64,
    pub p3: f64,
    pub budget: NoiseBudget,
    pub s_observed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FractionRow {
    pub pump_mw: f64,
    pub stokes_fraction: f64,
    pub antistokes_fraction: f64,
}

/// κ-scaled, filter-masked noise at pump power `p`.
pub fn observed_noise(
    p: f64,
    model: &NoiseModelParams,
    params: &EnsembleParams,
    pulse: &ControlPulse,
    grid: &Grid,
) -> Result<f64> {
    model.validate()?;
    let pump = pump_populations(p, model.p_sat)?;
    let b = raman_noise(params, pulse, &pump, grid)?;
    Ok(model.kappa * b.detected(model.filter_passes_antistokes))
}

pub fn noise_curve(
    p_values: &[f64],
    model: &NoiseModelParams,
    params: &EnsembleParams,
    pulse: &ControlPulse,
    grid: &Grid,
) -> Result<Vec<NoiseRow>> {
    NoiseEngine::new(*params, pulse.clone(), *grid)?.curve(p_values, model)
}

pub fn stokes_fraction_curve(
    p_values: &[f64],
    p_sat: f64,
    params: &EnsembleParams,
    pulse: &ControlPulse,
    grid: &Grid,
) -> Result<Vec<FractionRow>> {
    NoiseEngine::new(*params, pulse.clone(), *grid)?.fraction_curve(p_values, p_sat)
}

/// Retrieved signal photons over the unconditional noise floor.
pub fn snr_estimate(retrieved_signal_photons: f64, noise_floor: f64) -> Result<f64> {
    if !(noise_floor > 0.0) {
        return Err(Error::Domain(format!(
            "signal-to-noise ratio needs a positive noise floor, got {noise_floor}"
        )));
    }
    Ok(retrieved_signal_photons / noise_floor)
}

/// Polynomial interpolant of the noise budget in `p3` on Chebyshev–Lobatto
/// nodes.
///
/// The budget is an analytic function of the populations, so a modest number
/// of full solves gives a cheap and accurate stand-in for repeated
/// evaluations (curve fitting, dense sweeps).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseResponse {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<NoiseBudget>,
}

impl NoiseResponse {
    pub const DEFAULT_NODES: usize = 17;

    pub fn build(engine: &NoiseEngine, n_nodes: usize) -> Result<Self> {
        if n_nodes < 2 {
            return Err(invalid("n_nodes", "need at least two interpolation nodes"));
        }
        let n = n_nodes - 1;
        let nodes: Vec<f64> = (0..=n)
            .map(|k| 0.5 * (1.0 - (std::f64::consts::PI * k as f64 / n as f64).cos()))
            .collect();
        let weights = (0..=n)
            .map(|k| {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                if k == 0 || k == n {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let values = nodes
            .par_iter()
            .map(|&p3| engine.budget(&PumpState::from_p3(p3)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { nodes, weights, values })
    }

    /// Interpolated budget at population `p3 ∈ [0, 1]`.
    pub fn budget(&self, p3: f64) -> NoiseBudget {
        let p3 = p3.clamp(0.0, 1.0);
        let mut num = [0.0; 4];
        let mut den = 0.0;
        for ((x, w), v) in self.nodes.iter().zip(&self.weights).zip(&self.values) {
            let diff = p3 - x;
            if diff == 0.0 {
                return *v;
            }
            let c = w / diff;
            den += c;
            num[0] += c * v.s_stokes_spont;
            num[1] += c * v.s_stokes_fwm;
            num[2] += c * v.s_antistokes_spont;
            num[3] += c * v.s_antistokes_fwm;
        }
        NoiseBudget::new(num[0] / den, num[1] / den, num[2] / den, num[3] / den)
    }

    pub fn observed(&self, p: f64, model: &NoiseModelParams) -> Result<f64> {
        let pump = pump_populations(p, model.p_sat)?;
        Ok(model.kappa * self.budget(pump.p3()).detected(model.filter_passes_antistokes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulse::{PulseShape, PulseSpec};
    use crate::units::{FrequencyConvention, Unit};
    use approx::assert_relative_eq;

    fn coarse(energy_ghz: f64, d: f64) -> (EnsembleParams, ControlPulse, Grid) {
        let conv = FrequencyConvention::Ordinary;
        let mut params = EnsembleParams::reference(conv);
        params.d = d;
        let w = conv.quoted_to_rad_per_ns(energy_ghz, Unit::GHz).unwrap();
        let spec = PulseSpec::new(PulseShape::Gaussian, 0.3, w).unwrap();
        let grid = spec.grid_with(40, 200);
        (params, spec.sample(&grid).unwrap(), grid)
    }

    #[test]
    fn pump_formula_points() {
        assert_eq!(pump_populations(0.0, 84.0).unwrap().p3(), 0.5);
        assert!((pump_populations(84.0, 84.0).unwrap().p3() - 0.75).abs() < 1e-12);
        let p = pump_populations(-1000.0 * 84.0, 84.0).unwrap();
        assert!((p.p3() - 0.5 / 1001.0).abs() < 1e-12);
        assert!((p.p3() - 4.995e-4).abs() < 1e-6);
        assert!(pump_populations(1.0, 0.0).is_err());
        assert!(pump_populations(1.0, -3.0).is_err());
    }

    #[test]
    fn no_control_no_noise() {
        let (params, pulse, grid) = coarse(0.0, 1900.0);
        let b = raman_noise(&params, &pulse, &PumpState::from_p3(0.3).unwrap(), &grid).unwrap();
        assert_eq!(b.s_total, 0.0);
        assert!(b.fractions().is_err());
    }

    #[test]
    fn no_atoms_no_noise() {
        let (params, pulse, grid) = coarse(30.0, 0.0);
        let b = raman_noise(&params, &pulse, &PumpState::from_p3(0.3).unwrap(), &grid).unwrap();
        assert_eq!(b, NoiseBudget::default());
    }

    #[test]
    fn perfect_blue_pumping_leaves_only_fwm_stokes() {
        let (params, pulse, grid) = coarse(30.0, 1900.0);
        let b = raman_noise(&params, &pulse, &PumpState::all_in_1(), &grid).unwrap();
        assert_eq!(b.s_stokes_spont, 0.0);
        assert!(b.s_stokes_fwm > 0.0);
        assert_eq!(b.stokes(), b.s_stokes_fwm);
    }

    #[test]
    fn budget_components_sum() {
        let (params, pulse, grid) = coarse(30.0, 1900.0);
        let b = raman_noise(&params, &pulse, &PumpState::from_p3(0.2).unwrap(), &grid).unwrap();
        for c in [
            b.s_stokes_spont,
            b.s_stokes_fwm,
            b.s_antistokes_spont,
            b.s_antistokes_fwm,
        ] {
            assert!(c >= 0.0);
        }
        assert_eq!(
            b.s_total,
            b.s_stokes_spont + b.s_stokes_fwm + b.s_antistokes_spont + b.s_antistokes_fwm
        );
        let (s, a) = b.fractions().unwrap();
        assert_relative_eq!(s + a, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn kappa_and_mask() {
        let (params, pulse, grid) = coarse(30.0, 1900.0);
        let engine = NoiseEngine::new(params, pulse, grid).unwrap();
        let on = NoiseModelParams::new(84.0, 0.12, true).unwrap();
        let off = NoiseModelParams::new(84.0, 0.12, false).unwrap();
        let zero = NoiseModelParams::new(84.0, 0.0, true).unwrap();
        for p in [-200.0, 0.0, 150.0] {
            let a = engine.observed(p, &on).unwrap();
            let b = engine.observed(p, &off).unwrap();
            assert!(b <= a);
            assert_eq!(engine.observed(p, &zero).unwrap(), 0.0);
        }
        // Ratios between pump points do not depend on κ.
        let k2 = NoiseModelParams::new(84.0, 0.5, true).unwrap();
        let r1 = engine.observed(-100.0, &on).unwrap() / engine.observed(50.0, &on).unwrap();
        let r2 = engine.observed(-100.0, &k2).unwrap() / engine.observed(50.0, &k2).unwrap();
        assert_relative_eq!(r1, r2, max_relative = 1e-14);
        assert_eq!(engine.cached_states(), 5);
    }

    #[test]
    fn singleton_curve_matches_direct_budget() {
        let (params, pulse, grid) = coarse(30.0, 1900.0);
        let model = NoiseModelParams::reference();
        let rows = noise_curve(&[0.0], &model, &params, &pulse, &grid).unwrap();
        assert_eq!(rows.len(), 1);
        let direct = raman_noise(&params, &pulse, &PumpState::from_p3(0.5).unwrap(), &grid).unwrap();
        assert_eq!(rows[0].budget, direct);
        assert_eq!(rows[0].p3, 0.5);
        assert!(noise_curve(&[], &model, &params, &pulse, &grid).is_err());
    }

    #[test]
    fn fractions_sum_to_one() {
        let (params, pulse, grid) = coarse(30.0, 1900.0);
        let rows = stokes_fraction_curve(&[-500.0, -20.0, 0.0, 80.0], 84.0, &params, &pulse, &grid).unwrap();
        for r in rows {
            assert_relative_eq!(r.stokes_fraction + r.antistokes_fraction, 1.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn snr() {
        assert_relative_eq!(snr_estimate(1.0, 0.1).unwrap(), 10.0, max_relative = 1e-15);
        assert_eq!(snr_estimate(1.0, 0.25).unwrap(), 4.0);
        assert_eq!(snr_estimate(0.0, 0.3).unwrap(), 0.0);
        assert!(snr_estimate(1.0, 0.0).is_err());
    }

    #[test]
    fn model_params_validation() {
        assert!(NoiseModelParams::new(0.0, 0.1, true).is_err());
        assert!(NoiseModelParams::new(84.0, 1.5, true).is_err());
        assert!(NoiseModelParams::new(84.0, 1.0, false).is_ok());
    }

    #[test]
    fn interpolant_tracks_direct_solves() {
        let (params, pulse, grid) = coarse(30.0, 1900.0);
        let engine = NoiseEngine::new(params, pulse, grid).unwrap();
        let resp = NoiseResponse::build(&engine, NoiseResponse::DEFAULT_NODES).unwrap();
        for p3 in [0.013, 0.27, 0.5, 0.81, 0.97] {
            let direct = engine.budget(&PumpState::from_p3(p3).unwrap()).unwrap();
            let approx = resp.budget(p3);
            assert_relative_eq!(approx.s_total, direct.s_total, max_relative = 1e-6);
            assert_relative_eq!(approx.stokes(), direct.stokes(), max_relative = 1e-6);
        }
    }
}
