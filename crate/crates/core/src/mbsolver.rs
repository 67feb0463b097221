//! Linearised Maxwell–Bloch propagation and Green's-function kernels.
//!
//! The three coupled amplitudes are the Stokes field `A_S`, the conjugated
//! anti-Stokes field `A†_AS` and the spin wave `B`:
//!
//! ```text
//! ∂z A_S   = −(dγ p1/Γ_S) A_S − (Ω √(dγ)/Γ_S) B
//! ∂z A†_AS = +(dγ p3/Γ*_AS) A†_AS − (Ω* √(dγ)/Γ*_AS) B
//! ∂τ B     = |Ω|² (1/Γ_S − 1/Γ*_AS) B
//!            − √(dγ) Ω* (p1/Γ_S + p3/Γ*_S) A_S
//!            − √(dγ) Ω  (p1/Γ_AS + p3/Γ*_AS) A†_AS
//! ```
//!
//! Both fields enter at `z = 0`; the spin wave starts from `B(z, τ_min)`.
//!
//! The scheme is a box scheme on the (z, τ) grid. The spin wave is advanced
//! in τ by the implicit midpoint rule. The fields are integrated in z with an
//! exponential integrator that is exact for the constant damping term and
//! treats the spin-wave source as piecewise linear. Both pieces are second
//! order, and the implicit coupling at each node is a scalar elimination.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::params::{EnsembleParams, Grid, PumpState};
use crate::pulse::ControlPulse;

type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Minimum number of τ samples across the control FWHM.
pub const MIN_POINTS_PER_FWHM: usize = 16;

/// Boundary data at `z = 0` and the initial spin wave at `τ_min`.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    pub a_s_in: Vec<C64>,
    pub a_as_dag_in: Vec<C64>,
    pub b_in: Vec<C64>,
}

impl Inputs {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            a_s_in: vec![ZERO; grid.ntau],
            a_as_dag_in: vec![ZERO; grid.ntau],
            b_in: vec![ZERO; grid.nz],
        }
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        if self.a_s_in.len() != grid.ntau || self.a_as_dag_in.len() != grid.ntau {
            return Err(Error::Shape(format!(
                "field inputs need {} time samples (got {} and {})",
                grid.ntau,
                self.a_s_in.len(),
                self.a_as_dag_in.len()
            )));
        }
        if self.b_in.len() != grid.nz {
            return Err(Error::Shape(format!(
                "spin-wave input needs {} z samples, got {}",
                grid.nz,
                self.b_in.len()
            )));
        }
        Ok(())
    }

    /// First τ index at which anything is non-zero (spin wave counts as 0).
    fn first_active(&self) -> usize {
        if self.b_in.iter().any(|b| *b != ZERO) {
            return 0;
        }
        let first = |v: &[C64]| v.iter().position(|x| *x != ZERO).unwrap_or(v.len());
        first(&self.a_s_in).min(first(&self.a_as_dag_in))
    }
}

/// Full interior solution, stored level by level (`index = j * nz + i`).
#[derive(Debug, Clone)]
pub struct FieldState {
    pub grid: Grid,
    pub a_s: Vec<C64>,
    pub a_as_dag: Vec<C64>,
    pub b: Vec<C64>,
}

impl FieldState {
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.grid.nz + i
    }

    pub fn a_s_at(&self, i: usize, j: usize) -> C64 {
        self.a_s[self.idx(i, j)]
    }

    pub fn a_as_dag_at(&self, i: usize, j: usize) -> C64 {
        self.a_as_dag[self.idx(i, j)]
    }

    pub fn b_at(&self, i: usize, j: usize) -> C64 {
        self.b[self.idx(i, j)]
    }

    /// Stokes amplitude leaving the cell (z = 1) versus τ.
    pub fn stokes_out(&self) -> Vec<C64> {
        let i = self.grid.nz - 1;
        (0..self.grid.ntau).map(|j| self.a_s_at(i, j)).collect()
    }

    /// Conjugated anti-Stokes amplitude at z = 1 versus τ.
    pub fn antistokes_dag_out(&self) -> Vec<C64> {
        let i = self.grid.nz - 1;
        (0..self.grid.ntau).map(|j| self.a_as_dag_at(i, j)).collect()
    }

    /// Spin wave after the pulse (τ = τ_max) versus z.
    pub fn spin_wave_out(&self) -> Vec<C64> {
        let j = self.grid.ntau - 1;
        (0..self.grid.nz).map(|i| self.b_at(i, j)).collect()
    }
}

/// Receives each completed τ level of a march.
trait LevelSink {
    fn level(&mut self, j: usize, a: &[C64], d: &[C64], b: &[C64]);
}

struct FullSink<'a>(&'a mut FieldState);

impl LevelSink for FullSink<'_> {
    fn level(&mut self, j: usize, a: &[C64], d: &[C64], b: &[C64]) {
        let nz = a.len();
        let r = j * nz..(j + 1) * nz;
        self.0.a_s[r.clone()].copy_from_slice(a);
        self.0.a_as_dag[r.clone()].copy_from_slice(d);
        self.0.b[r].copy_from_slice(b);
    }
}

/// Keeps only the z = 1 field values.
struct OutputSink {
    a: Vec<C64>,
    d: Vec<C64>,
}

impl LevelSink for OutputSink {
    fn level(&mut self, j: usize, a: &[C64], d: &[C64], _b: &[C64]) {
        self.a[j] = a[a.len() - 1];
        self.d[j] = d[d.len() - 1];
    }
}

/// Weights of the exact exponential step for `y' = λ y + s(z)` with `s`
/// linear across the step: `y1 = e^{λh} y0 + w0 s0 + w1 s1`.
fn etd_weights(lambda: C64, h: f64) -> (C64, C64, C64) {
    let x = lambda * h;
    let e = x.exp();
    if x.norm() < 1e-4 {
        // Series of (e^x − 1)/x and (e^x − 1 − x)/x².
        let p1 = h * (1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0);
        let p2 = h * (0.5 + x / 6.0 + x * x / 24.0 + x * x * x / 120.0);
        (e, p1 - p2, p2)
    } else {
        let p1 = (e - 1.0) / lambda;
        let p2 = (e - 1.0 - x) / (lambda * x);
        (e, p1 - p2, p2)
    }
}

/// Per-level coefficients of the τ step j → j+1.
#[derive(Clone, Copy)]
struct StepCoeffs {
    /// Field sources at the new level: `σ_A = −cΩ`, `σ_D = −eΩ*`.
    sig_a: C64,
    sig_d: C64,
    /// `κ = h ⟨|Ω|²⟩ Δτ/2`.
    kappa: C64,
    /// Couplings of the averaged fields into B (times Δτ/2).
    m_a: C64,
    m_d: C64,
}

/// Precomputed propagator for one (params, pulse, pump, grid) combination.
pub(crate) struct Propagator {
    nz: usize,
    ntau: usize,
    e_a: C64,
    w0_a: C64,
    w1_a: C64,
    e_d: C64,
    w0_d: C64,
    w1_d: C64,
    /// Field sources at level 0.
    sig0: (C64, C64),
    steps: Vec<StepCoeffs>,
}

impl Propagator {
    pub(crate) fn new(params: &EnsembleParams, pulse: &ControlPulse, pump: &PumpState, grid: &Grid) -> Result<Self> {
        params.validate()?;
        grid.validate()?;
        if !pulse.matches(grid) {
            return Err(Error::Shape("control pulse is not sampled on the solver grid".into()));
        }
        let (gs, gas) = params.derived_detunings();
        if gs.norm() == 0.0 {
            return Err(Error::SingularDetuning("Γ_S"));
        }
        if gas.norm() == 0.0 {
            return Err(Error::SingularDetuning("Γ_AS"));
        }
        let points = pulse.fwhm() / grid.dtau();
        if pulse.energy() > 0.0 && points < MIN_POINTS_PER_FWHM as f64 {
            return Err(Error::Resolution {
                points,
                required: MIN_POINTS_PER_FWHM,
            });
        }
        if pulse.max_rabi() > params.delta_s.abs() / 3.0 {
            log::warn!(
                "peak Rabi frequency {:.3} rad/ns exceeds a third of the detuning {:.3} rad/ns; \
                 the adiabatic equations may be inaccurate",
                pulse.max_rabi(),
                params.delta_s
            );
        }

        let (p1, p3) = (pump.p1(), pump.p3());
        let dg = params.d * params.gamma;
        let sdg = dg.sqrt();
        let gas_c = gas.conj();
        let gs_c = gs.conj();

        let damp_a = -(dg * p1) / gs;
        let gain_d = (dg * p3) / gas_c;
        let c = sdg / gs;
        let e = sdg / gas_c;
        let h = 1.0 / gs - 1.0 / gas_c;
        let mu = sdg * (p1 / gs + p3 / gs_c);
        let nu = sdg * (p1 / gas + p3 / gas_c);

        let dz = grid.dz();
        let dtau = grid.dtau();
        let (e_a, w0_a, w1_a) = etd_weights(damp_a, dz);
        let (e_d, w0_d, w1_d) = etd_weights(gain_d, dz);

        let omega = pulse.samples();
        let sig0 = (-c * omega[0], -e * omega[0].conj());
        let steps = (0..grid.ntau - 1)
            .map(|j| {
                let (o0, o1) = (omega[j], omega[j + 1]);
                let mean_int = 0.5 * (o0.norm_sqr() + o1.norm_sqr());
                let mean = 0.5 * (o0 + o1);
                StepCoeffs {
                    sig_a: -c * o1,
                    sig_d: -e * o1.conj(),
                    kappa: h * mean_int * (0.5 * dtau),
                    m_a: mu * mean.conj() * (0.5 * dtau),
                    m_d: nu * mean * (0.5 * dtau),
                }
            })
            .collect();

        let coeffs = [e_a, w0_a, w1_a, e_d, w0_d, w1_d];
        if coeffs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::SingularDetuning("propagation coefficients"));
        }

        Ok(Self {
            nz: grid.nz,
            ntau: grid.ntau,
            e_a,
            w0_a,
            w1_a,
            e_d,
            w0_d,
            w1_d,
            sig0,
            steps,
        })
    }

    /// Marches the solution over all τ levels, feeding each level to `sink`.
    /// Levels before `start` are identically zero and are skipped.
    fn march<S: LevelSink>(&self, a_in: &[C64], d_in: &[C64], b_in: &[C64], start: usize, sink: &mut S) {
        let nz = self.nz;
        let mut a = vec![ZERO; nz];
        let mut d = vec![ZERO; nz];
        let mut b = vec![ZERO; nz];
        let mut a_new = vec![ZERO; nz];
        let mut d_new = vec![ZERO; nz];
        let mut b_new = vec![ZERO; nz];

        let first = if start == 0 {
            b.copy_from_slice(b_in);
            a[0] = a_in[0];
            d[0] = d_in[0];
            let (sa, sd) = self.sig0;
            for i in 0..nz - 1 {
                a[i + 1] = self.e_a * a[i] + sa * (self.w0_a * b[i] + self.w1_a * b[i + 1]);
                d[i + 1] = self.e_d * d[i] + sd * (self.w0_d * b[i] + self.w1_d * b[i + 1]);
            }
            sink.level(0, &a, &d, &b);
            1
        } else {
            start.min(self.ntau)
        };

        for j in first..self.ntau {
            let s = self.steps[j - 1];
            let gain = 1.0 + s.kappa;
            let wa0 = s.sig_a * self.w0_a;
            let wd0 = s.sig_d * self.w0_d;
            let beta_a = s.sig_a * self.w1_a;
            let beta_d = s.sig_d * self.w1_d;
            let inv_den0 = 1.0 / (1.0 - s.kappa);
            let inv_den = 1.0 / (1.0 - s.kappa + s.m_a * beta_a + s.m_d * beta_d);

            a_new[0] = a_in[j];
            d_new[0] = d_in[j];
            b_new[0] = (b[0] * gain - s.m_a * (a[0] + a_new[0]) - s.m_d * (d[0] + d_new[0])) * inv_den0;
            for i in 1..nz {
                let alpha_a = self.e_a * a_new[i - 1] + wa0 * b_new[i - 1];
                let alpha_d = self.e_d * d_new[i - 1] + wd0 * b_new[i - 1];
                let bn = (b[i] * gain - s.m_a * (a[i] + alpha_a) - s.m_d * (d[i] + alpha_d)) * inv_den;
                b_new[i] = bn;
                a_new[i] = alpha_a + beta_a * bn;
                d_new[i] = alpha_d + beta_d * bn;
            }
            sink.level(j, &a_new, &d_new, &b_new);
            std::mem::swap(&mut a, &mut a_new);
            std::mem::swap(&mut d, &mut d_new);
            std::mem::swap(&mut b, &mut b_new);
        }
    }

    /// z = 1 outputs `(A_S, A†_AS)` for the given inputs.
    fn outputs(&self, a_in: &[C64], d_in: &[C64], b_in: &[C64], start: usize) -> (Vec<C64>, Vec<C64>) {
        let mut sink = OutputSink {
            a: vec![ZERO; self.ntau],
            d: vec![ZERO; self.ntau],
        };
        self.march(a_in, d_in, b_in, start, &mut sink);
        (sink.a, sink.d)
    }

    /// Response to a unit sample of one input basis element.
    pub(crate) fn impulse(&self, kind: ImpulseKind, k: usize) -> (Vec<C64>, Vec<C64>) {
        let mut a_in = vec![ZERO; self.ntau];
        let mut d_in = vec![ZERO; self.ntau];
        let mut b_in = vec![ZERO; self.nz];
        let start = match kind {
            ImpulseKind::Stokes => {
                a_in[k] = C64::new(1.0, 0.0);
                k
            }
            ImpulseKind::AntiStokes => {
                d_in[k] = C64::new(1.0, 0.0);
                k
            }
            ImpulseKind::SpinWave => {
                b_in[k] = C64::new(1.0, 0.0);
                0
            }
        };
        self.outputs(&a_in, &d_in, &b_in, start)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ImpulseKind {
    /// Unit sample of `A_S,in` at τ_k.
    Stokes,
    /// Unit sample of `A†_AS,in` at τ_k.
    AntiStokes,
    /// Unit sample of `B_in` at z_k.
    SpinWave,
}

/// Solves the coupled system for the given boundary and initial data.
pub fn propagate_fields(
    params: &EnsembleParams,
    pulse: &ControlPulse,
    pump: &PumpState,
    inputs: &Inputs,
    grid: &Grid,
) -> Result<FieldState> {
    inputs.check(grid)?;
    let prop = Propagator::new(params, pulse, pump, grid)?;
    let n = grid.nz * grid.ntau;
    let mut state = FieldState {
        grid: *grid,
        a_s: vec![ZERO; n],
        a_as_dag: vec![ZERO; n],
        b: vec![ZERO; n],
    };
    let start = inputs.first_active();
    prop.march(
        &inputs.a_s_in,
        &inputs.a_as_dag_in,
        &inputs.b_in,
        start,
        &mut FullSink(&mut state),
    );
    Ok(state)
}

/// Discretised Green's functions, quadrature weights folded in.
///
/// Matrix–vector products reproduce the solver outputs:
///
/// ```text
/// A_S,out  = k_s·A_S,in  + g_s·A†_AS,in + l_s·B_in
/// A_AS,out = k_as·A_AS,in + g_as·A†_S,in + l_as·B†_in
/// ```
///
/// so the continuous kernel is recovered by dividing column `k` by the
/// input quadrature weight (`tau_weights[k]` or `z_weights[k]`).
#[derive(Debug, Clone)]
pub struct GreensKernels {
    pub grid: Grid,
    pub pump: PumpState,
    pub k_s: DMatrix<C64>,
    pub g_s: DMatrix<C64>,
    pub l_s: DMatrix<C64>,
    pub k_as: DMatrix<C64>,
    pub g_as: DMatrix<C64>,
    pub l_as: DMatrix<C64>,
    pub tau_weights: Vec<f64>,
    pub z_weights: Vec<f64>,
}

/// Output fields predicted by applying [`GreensKernels`].
#[derive(Debug, Clone, PartialEq)]
pub struct KernelOutputs {
    pub stokes: Vec<C64>,
    pub antistokes: Vec<C64>,
}

impl GreensKernels {
    /// Applies the kernels to solver-convention inputs (the anti-Stokes
    /// input is given as `A†_AS,in`).
    pub fn apply(&self, inputs: &Inputs) -> Result<KernelOutputs> {
        inputs.check(&self.grid)?;
        let a = nalgebra::DVector::from_column_slice(&inputs.a_s_in);
        let d = nalgebra::DVector::from_column_slice(&inputs.a_as_dag_in);
        let b = nalgebra::DVector::from_column_slice(&inputs.b_in);
        let stokes = &self.k_s * &a + &self.g_s * &d + &self.l_s * &b;
        let antistokes = &self.k_as * d.conjugate() + &self.g_as * a.conjugate() + &self.l_as * b.conjugate();
        Ok(KernelOutputs {
            stokes: stokes.iter().copied().collect(),
            antistokes: antistokes.iter().copied().collect(),
        })
    }

    /// Equal-time Stokes commutator at output index `i`,
    /// `∫|K_S|²dτ' − ∫|G_S|²dτ' + (p1 − p3)∫|L_S|²dz`, in units of the
    /// discrete delta `1/w_i`. Equals one for a canonical transform.
    pub fn stokes_commutator(&self, i: usize) -> f64 {
        let w_i = self.tau_weights[i];
        let k = row_quadrature(&self.k_s, i, &self.tau_weights);
        let g = row_quadrature(&self.g_s, i, &self.tau_weights);
        let l = row_quadrature(&self.l_s, i, &self.z_weights);
        w_i * (k - g + (self.pump.p1() - self.pump.p3()) * l)
    }

    /// Anti-Stokes analogue: `∫|K_AS|² − ∫|G_AS|² − (p1 − p3)∫|L_AS|²`.
    pub fn antistokes_commutator(&self, i: usize) -> f64 {
        let w_i = self.tau_weights[i];
        let k = row_quadrature(&self.k_as, i, &self.tau_weights);
        let g = row_quadrature(&self.g_as, i, &self.tau_weights);
        let l = row_quadrature(&self.l_as, i, &self.z_weights);
        w_i * (k - g - (self.pump.p1() - self.pump.p3()) * l)
    }

    /// Continuous-kernel value `K_S(τ_i, τ_k)`.
    pub fn k_s_value(&self, i: usize, k: usize) -> C64 {
        self.k_s[(i, k)] / self.tau_weights[k]
    }
}

/// `Σ_k |M_ik|² / w_k`, i.e. `∫|K(τ_i, x)|² dx` for a weighted kernel matrix.
fn row_quadrature(m: &DMatrix<C64>, i: usize, w: &[f64]) -> f64 {
    m.row(i).iter().zip(w).map(|(x, w)| x.norm_sqr() / w).sum()
}

/// Builds all six kernels by impulse response, one solver run per column.
pub fn greens_kernels(
    params: &EnsembleParams,
    pulse: &ControlPulse,
    pump: &PumpState,
    grid: &Grid,
) -> Result<GreensKernels> {
    let prop = Propagator::new(params, pulse, pump, grid)?;
    let (nt, nz) = (grid.ntau, grid.nz);

    let run = |kind: ImpulseKind, n: usize| -> Vec<(Vec<C64>, Vec<C64>)> {
        (0..n).into_par_iter().map(|k| prop.impulse(kind, k)).collect()
    };
    let stokes = run(ImpulseKind::Stokes, nt);
    let anti = run(ImpulseKind::AntiStokes, nt);
    let spin = run(ImpulseKind::SpinWave, nz);

    let fill = |cols: &[(Vec<C64>, Vec<C64>)], pick_d: bool| -> DMatrix<C64> {
        DMatrix::from_fn(nt, cols.len(), |i, k| {
            let (a, d) = &cols[k];
            if pick_d {
                d[i].conj()
            } else {
                a[i]
            }
        })
    };

    Ok(GreensKernels {
        grid: *grid,
        pump: *pump,
        k_s: fill(&stokes, false),
        g_as: fill(&stokes, true),
        g_s: fill(&anti, false),
        k_as: fill(&anti, true),
        l_s: fill(&spin, false),
        l_as: fill(&spin, true),
        tau_weights: grid.tau_weights(),
        z_weights: grid.z_weights(),
    })
}

/// Double quadratures `∫∫|kernel|²` of the four noise-generating kernels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KernelQuadratures {
    pub g_s: f64,
    pub g_as: f64,
    pub l_s: f64,
    pub l_as: f64,
}

/// Computes the kernel quadratures column by column without storing the
/// kernels. Column sums are reduced in a fixed order, so the result does not
/// depend on thread scheduling.
pub fn kernel_quadratures(
    params: &EnsembleParams,
    pulse: &ControlPulse,
    pump: &PumpState,
    grid: &Grid,
) -> Result<KernelQuadratures> {
    let prop = Propagator::new(params, pulse, pump, grid)?;
    let wt = grid.tau_weights();
    let wz = grid.z_weights();
    let col_norm = |v: &[C64]| -> f64 { v.iter().zip(&wt).map(|(x, w)| x.norm_sqr() * w).sum() };

    // Stokes impulses feed G_AS, anti-Stokes impulses feed G_S.
    let per_tau: Vec<(f64, f64)> = (0..grid.ntau)
        .into_par_iter()
        .map(|k| {
            let (_, d) = prop.impulse(ImpulseKind::Stokes, k);
            let (a, _) = prop.impulse(ImpulseKind::AntiStokes, k);
            (col_norm(&a) / wt[k], col_norm(&d) / wt[k])
        })
        .collect();
    let per_z: Vec<(f64, f64)> = (0..grid.nz)
        .into_par_iter()
        .map(|k| {
            let (a, d) = prop.impulse(ImpulseKind::SpinWave, k);
            (col_norm(&a) / wz[k], col_norm(&d) / wz[k])
        })
        .collect();

    let mut q = KernelQuadratures::default();
    for (gs, gas) in per_tau {
        q.g_s += gs;
        q.g_as += gas;
    }
    for (ls, las) in per_z {
        q.l_s += ls;
        q.l_as += las;
    }
    Ok(q)
}
