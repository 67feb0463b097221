//! The three concrete fits: noise versus pump power, efficiency versus
//! storage time, and the fluorescence tail.

use std::f64::consts::PI;

use serde::Serialize;

use super::lm::{least_squares, FitOptions, FitProblem, FitResult};
use crate::dephasing::{Precession, SpinSystem};
use crate::error::{Error, Result};
use crate::noise::{pump_populations, NoiseEngine, NoiseResponse};
use crate::params::{EnsembleParams, Grid, MagneticField};
use crate::pulse::ControlPulse;

/// Paired observations with optional one-sigma errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataSet {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

impl DataSet {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Self::build(x, y, None)
    }

    pub fn with_sigma(x: Vec<f64>, y: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        Self::build(x, y, Some(sigma))
    }

    fn build(x: Vec<f64>, y: Vec<f64>, sigma: Option<Vec<f64>>) -> Result<Self> {
        if x.len() != y.len() || sigma.as_ref().is_some_and(|s| s.len() != x.len()) {
            return Err(Error::Shape("data columns have different lengths".into()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Domain("data contain non-finite values".into()));
        }
        if let Some(s) = &sigma {
            if s.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::Domain("sigma values must be positive".into()));
            }
        }
        Ok(Self { x, y, sigma })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    fn weight(&self, k: usize) -> f64 {
        self.sigma.as_ref().map_or(1.0, |s| 1.0 / s[k])
    }

    fn residuals(&self, model: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|k| (model(self.x[k]) - self.y[k]) * self.weight(k))
            .collect()
    }
}

pub const NOISE_PARAMS: [&str; 2] = ["p_sat_mw", "kappa"];
pub const DEPHASING_PARAMS: [&str; 4] = ["b_gauss", "theta_rad", "phi_rad", "scale"];
pub const FLUORESCENCE_PARAMS: [&str; 2] = ["amplitude", "lifetime_ns"];

/// Fits (P_s, κ) to observed noise counts versus signed pump power.
///
/// Builds a [`NoiseResponse`] for the given ensemble, pulse and grid and then
/// fits through it. Data on one side of zero pump power only constrain the
/// saturation power weakly; the result then carries a warning.
pub fn fit_noise_curve(
    data: &DataSet,
    params: &EnsembleParams,
    pulse: &ControlPulse,
    grid: &Grid,
    filter_passes_antistokes: bool,
) -> Result<FitResult> {
    check_noise_data(data)?;
    let engine = NoiseEngine::new(*params, pulse.clone(), *grid)?;
    let response = NoiseResponse::build(&engine, NoiseResponse::DEFAULT_NODES)?;
    fit_noise_with_response(data, &response, filter_passes_antistokes, None, &FitOptions::default())
}

fn check_noise_data(data: &DataSet) -> Result<()> {
    if data.len() < 4 {
        return Err(Error::Precondition(format!(
            "noise fit needs at least 4 points, got {}",
            data.len()
        )));
    }
    Ok(())
}

pub fn fit_noise_with_response(
    data: &DataSet,
    response: &NoiseResponse,
    filter_passes_antistokes: bool,
    guess: Option<[f64; 2]>,
    options: &FitOptions,
) -> Result<FitResult> {
    check_noise_data(data)?;
    let detected = |p: f64, p_sat: f64| -> Result<f64> {
        let pump = pump_populations(p, p_sat)?;
        Ok(response.budget(pump.p3()).detected(filter_passes_antistokes))
    };
    let guess = match guess {
        Some(g) => g,
        None => {
            let mut mags: Vec<f64> = data.x.iter().map(|p| p.abs()).filter(|p| *p > 0.0).collect();
            mags.sort_by(f64::total_cmp);
            let p_sat = mags.get(mags.len() / 2).copied().unwrap_or(100.0).clamp(1.0, 999.0);
            // Best κ for that saturation power is a linear least-squares problem.
            let (mut num, mut den) = (0.0, 0.0);
            for k in 0..data.len() {
                let s = detected(data.x[k], p_sat)?;
                let w = data.weight(k).powi(2);
                num += w * s * data.y[k];
                den += w * s * s;
            }
            let kappa = if den > 0.0 { (num / den).clamp(1e-6, 1.0) } else { 0.1 };
            [p_sat, kappa]
        }
    };
    let problem = FitProblem::new(
        &NOISE_PARAMS,
        vec![(0.0, 1e3), (0.0, 1.0)],
        guess.to_vec(),
        |q: &[f64]| {
            let s: Vec<f64> = data.x.iter().map(|p| detected(*p, q[0])).collect::<Result<_>>()?;
            Ok((0..data.len())
                .map(|k| (q[1] * s[k] - data.y[k]) * data.weight(k))
                .collect())
        },
    )?;
    let mut result = least_squares(&problem, options)?;
    let (neg, pos) = (data.x.iter().any(|p| *p < 0.0), data.x.iter().any(|p| *p > 0.0));
    if !(neg && pos) {
        result
            .diagnostics
            .push("ill-conditioned: all pump powers have the same sign".into());
    }
    Ok(result)
}

/// Extra controls for the dephasing fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DephasingFitOptions {
    pub lm: FitOptions,
    /// Starting point tried in addition to the spread seeds.
    pub guess: Option<[f64; 4]>,
    /// Hold the field strength at this value.
    pub fixed_b: Option<f64>,
    pub starts: usize,
}

impl Default for DephasingFitOptions {
    fn default() -> Self {
        Self {
            lm: FitOptions::default(),
            guess: None,
            fixed_b: None,
            starts: 8,
        }
    }
}

/// `k`-th point of the Halton sequence in base `b`.
fn halton(mut k: usize, b: usize) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while k > 0 {
        f /= b as f64;
        r += f * (k % b) as f64;
        k /= b;
    }
    r
}

/// Fits (B, θ, φ, scale) to relative retrieval efficiency versus storage time.
///
/// The angle landscape has several local minima, so the fit is restarted
/// from `starts` seeds spread over the parameter box (plus the optional
/// guess) and the lowest residual wins. The field orientation is only
/// determined up to φ → φ + π and (θ, φ) → (π − θ, −φ); see
/// [`canonical_orientation`](crate::dephasing::canonical_orientation).
pub fn fit_dephasing_curve(
    data: &DataSet,
    system: &SpinSystem,
    populations: &[f64],
    options: &DephasingFitOptions,
) -> Result<FitResult> {
    if data.len() < 5 {
        return Err(Error::Precondition(format!(
            "dephasing fit needs at least 5 points, got {}",
            data.len()
        )));
    }
    let (tmin, tmax) = data
        .x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| (a.min(*t), b.max(*t)));
    if tmax - tmin < 2000.0 {
        return Err(Error::Precondition(format!(
            "dephasing data must span at least 2 µs, got {:.0} ns",
            tmax - tmin
        )));
    }
    if data.x.iter().any(|t| *t < 0.0) {
        return Err(Error::Domain("storage times must be nonnegative".into()));
    }
    // Probe the populations once so errors surface as such, not as divergence.
    crate::dephasing::retrieval_efficiency(0.0, &MagneticField::new(0.0, 0.0, 0.0)?, system, populations)?;

    let residuals = |q: &[f64]| -> Result<Vec<f64>> {
        let field = MagneticField::new(q[0], q[1], q[2])?;
        let pr = Precession::new(system, &field);
        let eta0 = pr.eta(0.0, populations);
        Ok(data.residuals(|t| q[3] * pr.eta(t, populations) / eta0))
    };
    let bounds = vec![(0.0, 1.0), (0.0, PI), (0.0, 2.0 * PI), (0.0, 1.0)];
    let y_start = data
        .x
        .iter()
        .zip(&data.y)
        .min_by(|a, b| a.0.total_cmp(b.0))
        .map(|(_, y)| *y)
        .unwrap_or(0.5)
        .clamp(1e-3, 1.0);

    let mut seeds: Vec<[f64; 4]> = options.guess.into_iter().collect();
    for k in 1..=options.starts {
        seeds.push([
            0.02 + 0.5 * halton(k, 2),
            PI * (0.05 + 0.9 * halton(k, 3)),
            2.0 * PI * halton(k, 5),
            y_start,
        ]);
    }
    if seeds.is_empty() {
        return Err(Error::Precondition("no starting points for the dephasing fit".into()));
    }

    let mut best: Option<FitResult> = None;
    for seed in seeds {
        let mut problem = FitProblem::new(&DEPHASING_PARAMS, bounds.clone(), seed.to_vec(), residuals)?;
        if let Some(b) = options.fixed_b {
            problem = problem.fix(0, b);
        }
        let r = match least_squares(&problem, &options.lm) {
            Ok(r) => r,
            Err(Error::FitDiverged(_)) => continue,
            Err(e) => return Err(e),
        };
        if best.as_ref().is_none_or(|b| r.residual_norm < b.residual_norm) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| Error::FitDiverged("every start diverged".into()))
}

/// Fits `A·exp(−(t − t_start)/τ)` to histogram counts inside `window`.
///
/// The amplitude refers to the start of the window, which keeps it of the
/// order of the counts there. A window without any decay drives τ to its
/// upper bound; that is reported as a non-converged result. Without a
/// `guess` (amplitude, lifetime) the start comes from a log-linear fit.
pub fn fit_fluorescence_tail(
    histogram: &DataSet,
    window: (f64, f64),
    guess: Option<[f64; 2]>,
    options: &FitOptions,
) -> Result<FitResult> {
    let (t0, t1) = window;
    if histogram.is_empty() {
        return Err(Error::Precondition("histogram is empty".into()));
    }
    let (hmin, hmax) = histogram
        .x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| (a.min(*t), b.max(*t)));
    if !(t0 < t1) || t0 < hmin || t1 > hmax {
        return Err(Error::Precondition(format!(
            "window [{t0}, {t1}] is not inside the histogram support [{hmin}, {hmax}]"
        )));
    }
    if histogram.y.iter().any(|c| *c < 0.0) {
        return Err(Error::Domain("histogram counts must be nonnegative".into()));
    }
    let idx: Vec<usize> = (0..histogram.len())
        .filter(|&k| histogram.x[k] >= t0 && histogram.x[k] <= t1)
        .collect();
    if idx.len() < 3 {
        return Err(Error::Precondition(format!(
            "only {} bins inside the window",
            idx.len()
        )));
    }
    if idx.iter().all(|&k| histogram.y[k] == 0.0) {
        return Err(Error::FitDegenerate("all counts in the window are zero".into()));
    }
    let sub = DataSet::build(
        idx.iter().map(|&k| histogram.x[k] - t0).collect(),
        idx.iter().map(|&k| histogram.y[k]).collect(),
        histogram.sigma.as_ref().map(|s| idx.iter().map(|&k| s[k]).collect()),
    )?;

    // Log-linear regression on the positive bins for the starting point.
    let pts: Vec<(f64, f64)> = sub
        .x
        .iter()
        .zip(&sub.y)
        .filter(|(_, y)| **y > 0.0)
        .map(|(x, y)| (*x, y.ln()))
        .collect();
    let span = t1 - t0;
    let tau_max = 1e3 * span;
    let ymax = sub.y.iter().copied().fold(0.0, f64::max);
    let (a_guess, tau_guess) = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let tau = if slope < 0.0 {
            (-1.0 / slope).min(0.5 * tau_max)
        } else {
            0.5 * tau_max
        };
        ((my - slope.min(0.0) * mx).exp(), tau)
    } else {
        (ymax, span)
    };
    let (a_guess, tau_guess) = guess.map_or((a_guess, tau_guess), |g| (g[0], g[1].min(0.5 * tau_max)));
    let a_max = 100.0 * ymax;
    let problem = FitProblem::new(
        &FLUORESCENCE_PARAMS,
        vec![(0.0, a_max), (0.0, tau_max)],
        vec![a_guess.clamp(1e-6 * a_max, 0.99 * a_max), tau_guess],
        |q: &[f64]| Ok(sub.residuals(|t| q[0] * (-t / q[1]).exp())),
    )?;
    let mut result = least_squares(&problem, options)?;
    if result.parameters[1] > 0.99 * tau_max {
        result.converged = false;
        result
            .diagnostics
            .push("degenerate: no resolvable decay inside the window".into());
    }
    Ok(result)
}
