//! Periodic grid, discrete θ-operators and the PDE state container.
//!
//! θ lives on `[0, 1)` with unit total measure, so every integral over the
//! circle is a plain grid mean.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldsError {
    #[error("grid size {0} must be even and at least 16")]
    BadGridSize(usize),
    #[error("array length {got} does not match expected length {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("mean of an empty array")]
    Empty,
    #[error("field `{field}` has a non-finite entry at index {index}")]
    NonFinite { field: &'static str, index: usize },
}

/// Uniform grid on the unit circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGrid {
    n_points: usize,
    spacing: f64,
}

impl PeriodicGrid {
    pub fn new(n_points: usize) -> Result<Self, FieldsError> {
        if n_points < 16 || !n_points.is_multiple_of(2) {
            return Err(FieldsError::BadGridSize(n_points));
        }
        let spacing = 1.0 / n_points as f64;
        // spacing * N must be exactly one in binary64
        if spacing * n_points as f64 != 1.0 {
            return Err(FieldsError::BadGridSize(n_points));
        }
        Ok(Self { n_points, spacing })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn theta(&self, j: usize) -> f64 {
        j as f64 * self.spacing
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.theta(j)).collect()
    }

    fn check_len(&self, f: &[f64]) -> Result<(), FieldsError> {
        if f.len() != self.n_points {
            return Err(FieldsError::LengthMismatch {
                expected: self.n_points,
                got: f.len(),
            });
        }
        Ok(())
    }
}

/// Fourth-order centered periodic derivative.
pub fn deriv_theta(f: &[f64], grid: &PeriodicGrid) -> Result<Vec<f64>, FieldsError> {
    grid.check_len(f)?;
    let mut out = vec![0.0; f.len()];
    deriv_into(f, grid.spacing(), &mut out);
    Ok(out)
}

/// Allocation-free kernel behind [`deriv_theta`]. Lengths are trusted.
pub(crate) fn deriv_into(f: &[f64], spacing: f64, out: &mut [f64]) {
    let n = f.len();
    let scale = 1.0 / (12.0 * spacing);
    let stencil = |m2: f64, m1: f64, p1: f64, p2: f64| ((m2 - p2) + 8.0 * (p1 - m1)) * scale;
    for j in 2..n - 2 {
        out[j] = stencil(f[j - 2], f[j - 1], f[j + 1], f[j + 2]);
    }
    for j in [0, 1, n - 2, n - 1] {
        out[j] = stencil(f[(j + n - 2) % n], f[(j + n - 1) % n], f[(j + 1) % n], f[(j + 2) % n]);
    }
}

/// Discrete S¹ mean `(1/N) Σ f_j`.
pub fn mean(f: &[f64]) -> Result<f64, FieldsError> {
    if f.is_empty() {
        return Err(FieldsError::Empty);
    }
    Ok(raw_mean(f))
}

pub(crate) fn raw_mean(f: &[f64]) -> f64 {
    f.iter().sum::<f64>() / f.len() as f64
}

/// `⟨f·w⟩`, not normalized by `⟨w⟩`.
pub fn weighted_mean(f: &[f64], w: &[f64]) -> Result<f64, FieldsError> {
    if f.len() != w.len() {
        return Err(FieldsError::LengthMismatch {
            expected: f.len(),
            got: w.len(),
        });
    }
    if f.is_empty() {
        return Err(FieldsError::Empty);
    }
    Ok(f.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / f.len() as f64)
}

/// FFT helper for the optional low-pass filter and the spectral antiderivative.
#[derive(Clone)]
pub struct Spectral {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.n).finish()
    }
}

impl Spectral {
    pub fn new(grid: &PeriodicGrid) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.n_points();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    fn transform(&self, f: &[f64]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = f.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    fn back(&self, mut buf: Vec<Complex<f64>>, out: &mut [f64]) {
        self.inverse.process(&mut buf);
        let norm = 1.0 / self.n as f64;
        for (o, c) in out.iter_mut().zip(&buf) {
            *o = c.re * norm;
        }
    }

    /// Signed wavenumber of FFT bin `k`.
    fn wavenumber(&self, k: usize) -> i64 {
        if k <= self.n / 2 {
            k as i64
        } else {
            k as i64 - self.n as i64
        }
    }

    /// Zeroes every mode with `|m| > N/3` in place.
    pub fn low_pass(&self, f: &mut [f64]) {
        let mut buf = self.transform(f);
        let cutoff = (self.n / 3) as i64;
        for (k, c) in buf.iter_mut().enumerate() {
            if self.wavenumber(k).abs() > cutoff {
                *c = Complex::new(0.0, 0.0);
            }
        }
        self.back(buf, f);
    }

    /// Periodic antiderivative of the zero-mean part of `g`, pinned to zero at θ = 0.
    pub fn antiderivative(&self, g: &[f64]) -> Vec<f64> {
        let mut buf = self.transform(g);
        for (k, c) in buf.iter_mut().enumerate() {
            let m = self.wavenumber(k);
            if m == 0 || (self.n.is_multiple_of(2) && k == self.n / 2) {
                *c = Complex::new(0.0, 0.0);
            } else {
                *c /= Complex::new(0.0, 2.0 * PI * m as f64);
            }
        }
        let mut out = vec![0.0; self.n];
        self.back(buf, &mut out);
        let origin = out[0];
        out.iter_mut().for_each(|x| *x -= origin);
        out
    }
}

/// Full evolved state: `V, Q, ρ, l` and the momenta `π_V = e^ρ V_τ`,
/// `π_Q = e^{ρ+2(V−τ)} Q_τ` on a periodic grid at areal time `τ`.
///
/// `twist` selects the non-Gowdy source `ρ_τ = e^l`; with it off `ρ` is frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub grid: PeriodicGrid,
    pub tau: f64,
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    pub rho: Vec<f64>,
    pub ell: Vec<f64>,
    pub pi_v: Vec<f64>,
    pub pi_q: Vec<f64>,
    pub twist: bool,
}

impl FieldState {
    /// Builds and validates a state.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: PeriodicGrid,
        tau: f64,
        v: Vec<f64>,
        q: Vec<f64>,
        rho: Vec<f64>,
        ell: Vec<f64>,
        pi_v: Vec<f64>,
        pi_q: Vec<f64>,
        twist: bool,
    ) -> Result<Self, FieldsError> {
        let state = Self {
            grid,
            tau,
            v,
            q,
            rho,
            ell,
            pi_v,
            pi_q,
            twist,
        };
        state.validate()?;
        Ok(state)
    }

    /// A θ-independent state.
    #[allow(clippy::too_many_arguments)]
    pub fn homogeneous(
        grid: PeriodicGrid,
        tau: f64,
        v: f64,
        q: f64,
        rho: f64,
        ell: f64,
        pi_v: f64,
        pi_q: f64,
        twist: bool,
    ) -> Result<Self, FieldsError> {
        let n = grid.n_points();
        Self::new(
            grid,
            tau,
            vec![v; n],
            vec![q; n],
            vec![rho; n],
            vec![ell; n],
            vec![pi_v; n],
            vec![pi_q; n],
            twist,
        )
    }

    pub fn kappa(&self) -> f64 {
        if self.twist {
            1.0
        } else {
            0.0
        }
    }

    pub fn n_points(&self) -> usize {
        self.grid.n_points()
    }

    pub fn arrays(&self) -> [(&'static str, &[f64]); 6] {
        [
            ("V", self.v.as_slice()),
            ("Q", self.q.as_slice()),
            ("rho", self.rho.as_slice()),
            ("ell", self.ell.as_slice()),
            ("pi_V", self.pi_v.as_slice()),
            ("pi_Q", self.pi_q.as_slice()),
        ]
    }

    pub(crate) fn arrays_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.v,
            &mut self.q,
            &mut self.rho,
            &mut self.ell,
            &mut self.pi_v,
            &mut self.pi_q,
        ]
    }

    /// `V_τ = π_V e^{−ρ}` pointwise.
    pub fn v_tau(&self) -> Vec<f64> {
        self.pi_v
            .iter()
            .zip(&self.rho)
            .map(|(p, r)| p * (-r).exp())
            .collect()
    }

    /// `Q_τ = π_Q e^{−ρ−2(V−τ)}` pointwise.
    pub fn q_tau(&self) -> Vec<f64> {
        self.pi_q
            .iter()
            .zip(&self.rho)
            .zip(&self.v)
            .map(|((p, r), v)| p * (-r - 2.0 * (v - self.tau)).exp())
            .collect()
    }

    pub fn validate(&self) -> Result<(), FieldsError> {
        if !self.tau.is_finite() {
            return Err(FieldsError::NonFinite {
                field: "tau",
                index: 0,
            });
        }
        for (name, a) in self.arrays() {
            self.grid.check_len(a)?;
            if let Some(index) = a.iter().position(|x| !x.is_finite()) {
                return Err(FieldsError::NonFinite { field: name, index });
            }
        }
        if let Some(index) = self.v_tau().iter().position(|x| !x.is_finite()) {
            return Err(FieldsError::NonFinite {
                field: "V_tau",
                index,
            });
        }
        if let Some(index) = self.q_tau().iter().position(|x| !x.is_finite()) {
            return Err(FieldsError::NonFinite {
                field: "Q_tau",
                index,
            });
        }
        Ok(())
    }

    pub fn rho_min(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min)
    }
}
