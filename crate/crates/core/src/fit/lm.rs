//! Bounded Levenberg–Marquardt with finite-difference Jacobians.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

type Residuals<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync + 'a;

/// A residual function with box bounds and a starting point.
pub struct FitProblem<'a> {
    residuals: Box<Residuals<'a>>,
    pub names: Vec<String>,
    pub bounds: Vec<(f64, f64)>,
    pub initial_guess: Vec<f64>,
    fixed: Vec<Option<f64>>,
}

impl<'a> FitProblem<'a> {
    pub fn new<F>(names: &[&str], bounds: Vec<(f64, f64)>, initial_guess: Vec<f64>, residuals: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Sync + 'a,
    {
        let n = names.len();
        if bounds.len() != n || initial_guess.len() != n {
            return Err(Error::Precondition(format!(
                "{n} parameter names, {} bounds and {} initial values",
                bounds.len(),
                initial_guess.len()
            )));
        }
        for (k, ((lo, hi), x)) in bounds.iter().zip(&initial_guess).enumerate() {
            if !(lo < hi) {
                return Err(Error::Precondition(format!("empty bounds for `{}`", names[k])));
            }
            if !(x >= lo && x <= hi) || !x.is_finite() {
                return Err(Error::Precondition(format!(
                    "initial `{}` = {x} outside [{lo}, {hi}]",
                    names[k]
                )));
            }
        }
        Ok(Self {
            residuals: Box::new(residuals),
            names: names.iter().map(|s| s.to_string()).collect(),
            bounds,
            initial_guess,
            fixed: vec![None; n],
        })
    }

    /// Holds parameter `index` at `value` during the fit.
    pub fn fix(mut self, index: usize, value: f64) -> Self {
        self.fixed[index] = Some(value);
        self.initial_guess[index] = value;
        self
    }

    pub fn with_guess(mut self, guess: Vec<f64>) -> Self {
        for (k, g) in guess.into_iter().enumerate() {
            if self.fixed[k].is_none() {
                self.initial_guess[k] = g;
            }
        }
        self
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        (self.residuals)(x)
    }

    fn free(&self) -> Vec<usize> {
        (0..self.names.len()).filter(|k| self.fixed[*k].is_none()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Stop when an accepted step lowers the sum of squares by less than this fraction.
    pub ftol: f64,
    /// Stop when the largest gradient component falls below this.
    pub gtol: f64,
    pub max_iterations: usize,
    pub rel_step: f64,
    pub abs_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            ftol: 1e-10,
            gtol: 1e-8,
            max_iterations: 200,
            rel_step: 1e-6,
            abs_step: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub parameters: Vec<f64>,
    /// Final sum of squared residuals.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `s²(JᵀJ)⁻¹` in the original parameters; zero rows for fixed ones.
    #[serde(skip)]
    pub covariance_estimate: DMatrix<f64>,
    pub gradient_norm: f64,
    /// Sum of squares after each accepted step, starting at the initial guess.
    pub history: Vec<f64>,
    pub diagnostics: Vec<String>,
}

impl FitResult {
    /// One-sigma uncertainties from the covariance diagonal.
    pub fn uncertainties(&self) -> Vec<f64> {
        (0..self.parameters.len())
            .map(|k| self.covariance_estimate[(k, k)].max(0.0).sqrt())
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|k| self.parameters[k])
    }
}

/// Map between a bounded parameter and an unconstrained one.
#[derive(Debug, Clone, Copy)]
enum Transform {
    Identity,
    Lower(f64),
    Upper(f64),
    Box(f64, f64),
}

impl Transform {
    fn new((lo, hi): (f64, f64)) -> Self {
        match (lo.is_finite(), hi.is_finite()) {
            (false, false) => Transform::Identity,
            (true, false) => Transform::Lower(lo),
            (false, true) => Transform::Upper(hi),
            (true, true) => Transform::Box(lo, hi),
        }
    }

    fn to_internal(self, x: f64) -> f64 {
        // Starting points on a bound are nudged inside, where the map is finite.
        match self {
            Transform::Identity => x,
            Transform::Lower(lo) => (x - lo).max(1e-12 * (1.0 + lo.abs())).ln(),
            Transform::Upper(hi) => (hi - x).max(1e-12 * (1.0 + hi.abs())).ln(),
            Transform::Box(lo, hi) => {
                let s = ((x - lo) / (hi - lo)).clamp(1e-9, 1.0 - 1e-9);
                (s / (1.0 - s)).ln()
            }
        }
    }

    fn to_external(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::Lower(lo) => lo + u.exp(),
            Transform::Upper(hi) => hi - u.exp(),
            Transform::Box(lo, hi) => lo + (hi - lo) * logistic(u),
        }
    }

    fn derivative(self, u: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Lower(_) => u.exp(),
            Transform::Upper(_) => -u.exp(),
            Transform::Box(lo, hi) => {
                let s = logistic(u);
                (hi - lo) * s * (1.0 - s)
            }
        }
    }
}

fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

struct Internal<'p, 'a> {
    problem: &'p FitProblem<'a>,
    free: Vec<usize>,
    transforms: Vec<Transform>,
}

impl Internal<'_, '_> {
    fn external(&self, u: &[f64]) -> Vec<f64> {
        let mut x = self.problem.initial_guess.clone();
        for (k, &idx) in self.free.iter().enumerate() {
            x[idx] = self.transforms[idx].to_external(u[k]);
        }
        for (idx, f) in self.problem.fixed.iter().enumerate() {
            if let Some(v) = f {
                x[idx] = *v;
            }
        }
        x
    }

    fn residuals(&self, u: &[f64]) -> Result<DVector<f64>> {
        let r = self.problem.evaluate(&self.external(u))?;
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::FitDiverged("non-finite residual".into()));
        }
        Ok(DVector::from_vec(r))
    }

    fn jacobian(&self, u: &[f64], opts: &FitOptions, m: usize) -> Result<DMatrix<f64>> {
        let cols = (0..u.len())
            .into_par_iter()
            .map(|k| {
                let h = (opts.rel_step * u[k].abs()).max(opts.abs_step);
                let mut up = u.to_vec();
                let mut dn = u.to_vec();
                up[k] += h;
                dn[k] -= h;
                let rp = self.residuals(&up)?;
                let rm = self.residuals(&dn)?;
                Ok((rp - rm) / (up[k] - dn[k]))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut j = DMatrix::zeros(m, u.len());
        for (k, c) in cols.into_iter().enumerate() {
            j.set_column(k, &c);
        }
        Ok(j)
    }
}

fn solve_damped(jtj: &DMatrix<f64>, g: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let n = jtj.nrows();
    let mut a = jtj.clone();
    let dmax = (0..n).map(|k| jtj[(k, k)]).fold(0.0, f64::max);
    for k in 0..n {
        a[(k, k)] += lambda * jtj[(k, k)].max(1e-12 * dmax);
    }
    let rhs = -g;
    a.clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| a.lu().solve(&rhs))
        .filter(|d| d.iter().all(|v| v.is_finite()))
}

/// Minimises the sum of squared residuals of `problem`.
///
/// Bounded parameters are fitted through a logistic (box) or exponential
/// (half-line) map, and the Jacobian comes from central differences in the
/// mapped coordinates. Exhausting the iteration budget or meeting a
/// parameter the residuals do not depend on yields a non-converged result
/// with a diagnostic rather than an error.
pub fn least_squares(problem: &FitProblem<'_>, options: &FitOptions) -> Result<FitResult> {
    let n_all = problem.names.len();
    let free = problem.free();
    let transforms: Vec<Transform> = problem.bounds.iter().map(|b| Transform::new(*b)).collect();
    let internal = Internal {
        problem,
        free: free.clone(),
        transforms: transforms.clone(),
    };
    let mut u: Vec<f64> = free
        .iter()
        .map(|&i| transforms[i].to_internal(problem.initial_guess[i]))
        .collect();

    let mut r = internal.residuals(&u).map_err(|e| match e {
        Error::FitDiverged(_) => Error::Precondition("residuals are not finite at the initial guess".into()),
        other => other,
    })?;
    let m = r.len();
    if m < free.len() {
        return Err(Error::Precondition(format!(
            "{m} residuals cannot determine {} parameters",
            free.len()
        )));
    }
    let mut ssr = r.norm_squared();
    let mut history = vec![ssr];
    let mut diagnostics = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut lambda = 1e-3;
    let mut j = DMatrix::zeros(m, free.len());
    let mut gnorm = f64::INFINITY;

    if free.is_empty() {
        converged = true;
        gnorm = 0.0;
        diagnostics.push("all parameters fixed".into());
    }

    while !converged && iterations < options.max_iterations {
        iterations += 1;
        j = internal.jacobian(&u, options, m)?;
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        gnorm = g.amax();
        if gnorm < options.gtol || ssr == 0.0 {
            converged = true;
            break;
        }
        let dead: Vec<&str> = (0..free.len())
            .filter(|&k| j.column(k).amax() == 0.0)
            .map(|k| problem.names[free[k]].as_str())
            .collect();
        if !dead.is_empty() {
            diagnostics.push(format!(
                "singular Jacobian: residuals do not depend on {}",
                dead.join(", ")
            ));
            break;
        }

        let mut accepted = false;
        while lambda < 1e16 {
            let Some(step) = solve_damped(&jtj, &g, lambda) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            match internal.residuals(&trial) {
                Ok(rt) => {
                    let st = rt.norm_squared();
                    if st < ssr {
                        let reduction = (ssr - st) / ssr;
                        u = trial;
                        r = rt;
                        ssr = st;
                        history.push(ssr);
                        lambda = (lambda / 10.0).max(1e-12);
                        accepted = true;
                        if reduction < options.ftol || ssr == 0.0 {
                            converged = true;
                        }
                        break;
                    }
                    lambda *= 10.0;
                }
                // A step into a region where the model blows up is just rejected.
                Err(Error::FitDiverged(_)) => lambda *= 10.0,
                Err(e) => return Err(e),
            }
        }
        if !accepted {
            // No descent direction left at working precision.
            converged = true;
            diagnostics.push("stopped: no step reduces the residual further".into());
        }
    }
    if !converged && iterations >= options.max_iterations {
        diagnostics.push(format!("iteration limit {} reached", options.max_iterations));
    }

    let x = internal.external(&u);
    if !free.is_empty() && j.nrows() == m && iterations > 0 {
        // Refresh the Jacobian so the covariance refers to the final point.
        j = internal.jacobian(&u, options, m)?;
        gnorm = (j.transpose() * &r).amax();
    }
    let dof = m.saturating_sub(free.len());
    let s2 = if dof > 0 { ssr / dof as f64 } else { f64::NAN };
    let mut cov = DMatrix::zeros(n_all, n_all);
    if !free.is_empty() && iterations > 0 {
        let jtj = j.transpose() * &j;
        match jtj.clone().pseudo_inverse(1e-14 * jtj.amax().max(f64::MIN_POSITIVE)) {
            Ok(inv) => {
                let d: Vec<f64> = free
                    .iter()
                    .zip(&u)
                    .map(|(&i, &ui)| transforms[i].derivative(ui))
                    .collect();
                for a in 0..free.len() {
                    for b in 0..free.len() {
                        cov[(free[a], free[b])] = s2 * d[a] * d[b] * inv[(a, b)];
                    }
                }
            }
            Err(_) => diagnostics.push("covariance unavailable".into()),
        }
    }
    for (k, &idx) in free.iter().enumerate() {
        let t = transforms[idx];
        if matches!(t, Transform::Box(..)) && u[k].abs() > 18.0 {
            diagnostics.push(format!("`{}` is pinned at a bound", problem.names[idx]));
        }
    }

    Ok(FitResult {
        names: problem.names.clone(),
        parameters: x,
        residual_norm: ssr,
        iterations,
        converged,
        covariance_estimate: cov,
        gradient_norm: gnorm,
        history,
        diagnostics,
    })
}
