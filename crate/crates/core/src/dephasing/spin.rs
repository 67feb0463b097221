//! Angular-momentum matrices in the |F, m⟩ basis.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(X, Y, Z)` for spin `f`, basis ordered m = −f, …, f.
///
/// Built from the ladder operator with the Condon–Shortley phase:
/// `J₊|m⟩ = √(f(f+1) − m(m+1)) |m+1⟩`, `X = (J₊ + J₋)/2`,
/// `Y = (J₊ − J₋)/2i`.
pub fn spin_matrices(f: f64) -> Result<(DMatrix<C64>, DMatrix<C64>, DMatrix<C64>)> {
    let twice = 2.0 * f;
    if !(f >= 0.0) || !f.is_finite() || (twice - twice.round()).abs() > 1e-12 || twice > 200.0 {
        return Err(Error::Domain(format!(
            "spin quantum number must be a nonnegative half-integer, got {f}"
        )));
    }
    let n = twice.round() as usize + 1;
    let m = |k: usize| k as f64 - f;
    let mut jp = DMatrix::<C64>::zeros(n, n);
    for k in 0..n - 1 {
        jp[(k + 1, k)] = C64::new((f * (f + 1.0) - m(k) * (m(k) + 1.0)).sqrt(), 0.0);
    }
    let jm = jp.adjoint();
    let x = (&jp + &jm) * C64::new(0.5, 0.0);
    let y = (&jp - &jm) * C64::new(0.0, -0.5);
    let z = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |k, _| C64::new(m(k), 0.0)));
    Ok((x, y, z))
}

/// One hyperfine manifold: total angular momentum and Landé factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinManifold {
    pub f: f64,
    pub g_factor: f64,
}

impl SpinManifold {
    pub fn new(f: f64, g_factor: f64) -> Result<Self> {
        spin_matrices(f)?;
        if !g_factor.is_finite() {
            return Err(Error::Domain(format!("g-factor must be finite, got {g_factor}")));
        }
        Ok(Self { f, g_factor })
    }

    pub fn dimension(&self) -> usize {
        (2.0 * self.f).round() as usize + 1
    }

    /// Magnetic quantum numbers in basis order.
    pub fn ms(&self) -> Vec<f64> {
        (0..self.dimension()).map(|k| k as f64 - self.f).collect()
    }
}
