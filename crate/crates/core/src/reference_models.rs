//! Closed-form and ODE reference solutions.
//!
//! The pseudo-homogeneous reduction here is written directly in terms of
//! `(V, V_τ, Q, ρ, l)` and shares no code with the PDE right-hand side.

use ode_solvers::dopri5::Dopri5;
use ode_solvers::{SVector, System};
use thiserror::Error;

use crate::diagnostics::{C_STAR, D_STAR};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("tolerance must be positive and finite, got {0}")]
    BadTolerance(f64),
    #[error("tau_end {tau_end} must exceed the start {tau0}")]
    BadInterval { tau0: f64, tau_end: f64 },
    #[error("c-bar reached zero near tau = {tau}")]
    Singular { tau: f64 },
    #[error("integrator failed near tau = {tau}: {reason}")]
    Integrator { tau: f64, reason: String },
}

/// Sampled ODE solution. Rows of `values` are `[V, V_τ, Q, Q_τ, ρ, l]` for
/// the homogeneous models and `[c̄, d̄]` for the attractor ODE.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub taus: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &[f64])> {
        Some((*self.taus.last()?, self.values.last()?.as_slice()))
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[k]).collect()
    }
}

/// Polarised Kasner solution with `κ = 0`: returns `(V, l̂, ρ, Q)`.
pub fn kasner_exact(a: f64, b: f64, c: f64, rho: f64, tau: f64) -> (f64, f64, f64, f64) {
    (a * tau + b, (0.5 * a * a - 2.0) * tau + c, rho, 0.0)
}

/// Homogeneous data `(V, V_τ, Q, π_Q, ρ, l)` at time `tau0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousData {
    pub tau0: f64,
    pub v: f64,
    pub v_tau: f64,
    pub q: f64,
    pub pi_q: f64,
    pub rho: f64,
    pub ell: f64,
    /// Twist on (`ρ_τ = e^l`) or off (Gowdy, `ρ` constant).
    pub twist: bool,
}

type PhState = SVector<f64, 5>;

struct PhSystem {
    pi_q: f64,
    kappa: f64,
}

impl PhSystem {
    fn q_tau(&self, tau: f64, v: f64, rho: f64) -> f64 {
        self.pi_q * (-rho - 2.0 * (v - tau)).exp()
    }
}

impl System<f64, PhState> for PhSystem {
    // y = (V, V_τ, Q, ρ, l)
    fn system(&self, tau: f64, y: &PhState, dy: &mut PhState) {
        let (v, vt, rho, ell) = (y[0], y[1], y[3], y[4]);
        let qt = self.q_tau(tau, v, rho);
        let ev = (2.0 * (v - tau)).exp();
        let rho_t = self.kappa * ell.exp();
        dy[0] = vt;
        dy[1] = -rho_t * vt + ev * qt * qt;
        dy[2] = qt;
        dy[3] = rho_t;
        dy[4] = 0.5 * (vt * vt + ev * qt * qt) - rho_t - 2.0;
    }
}

fn check_interval(tau0: f64, tau_end: f64, tol: f64) -> Result<(), OracleError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(OracleError::BadTolerance(tol));
    }
    if !(tau_end > tau0) {
        return Err(OracleError::BadInterval { tau0, tau_end });
    }
    Ok(())
}

fn integrator_error(e: ode_solvers::dop_shared::IntegrationError) -> OracleError {
    use ode_solvers::dop_shared::IntegrationError as E;
    match e {
        E::StepSizeUnderflow { x } => OracleError::Integrator {
            tau: x,
            reason: "step size underflow".into(),
        },
        E::MaxNumStepReached { x, n_step } => OracleError::Integrator {
            tau: x,
            reason: format!("step limit {n_step} reached"),
        },
        E::StiffnessDetected { x } => OracleError::Integrator {
            tau: x,
            reason: "stiffness detected".into(),
        },
    }
}

/// Pseudo-homogeneous reduction integrated with Dormand–Prince 5(4) at
/// relative tolerance `tol`, sampled every `dtau_out`. `π_Q` is held fixed.
pub fn ph_ode(
    init: &HomogeneousData,
    tau_end: f64,
    tol: f64,
    dtau_out: f64,
) -> Result<ReferenceTrajectory, OracleError> {
    check_interval(init.tau0, tau_end, tol)?;
    let sys = PhSystem {
        pi_q: init.pi_q,
        kappa: if init.twist { 1.0 } else { 0.0 },
    };
    let y0 = PhState::from([init.v, init.v_tau, init.q, init.rho, init.ell]);
    let mut solver = Dopri5::from_param(
        sys,
        init.tau0,
        tau_end,
        dtau_out,
        y0,
        tol,
        tol * 1e-2,
        0.9,
        0.04,
        0.2,
        10.0,
        f64::INFINITY,
        0.0,
        10_000_000,
        u32::MAX,
        ode_solvers::dop_shared::OutputType::Dense,
    );
    solver
        .integrate()
        .map_err(integrator_error)?;
    let sys = PhSystem {
        pi_q: init.pi_q,
        kappa: 0.0,
    };
    let (taus, ys) = (solver.x_out(), solver.y_out());
    let values = taus
        .iter()
        .zip(ys)
        .map(|(&t, y)| {
            let qt = sys.q_tau(t, y[0], y[3]);
            vec![y[0], y[1], y[2], qt, y[3], y[4]]
        })
        .collect();
    Ok(ReferenceTrajectory {
        taus: taus.clone(),
        values,
    })
}

type CdState = SVector<f64, 2>;

struct CdSystem;

impl System<f64, CdState> for CdSystem {
    fn system(&self, _tau: f64, y: &CdState, dy: &mut CdState) {
        let (c, d) = (y[0], y[1]);
        dy[0] = d - 0.5 * c;
        dy[1] = d / (c * c) - 2.5 * d;
    }

    fn solout(&mut self, _tau: f64, y: &CdState, _dy: &CdState) -> bool {
        y[0].abs() < 1e-6
    }
}

/// Fixed point `(2/√10, 1/√10)` of the `(c̄, d̄)` system.
pub const CD_FIXED_POINT: (f64, f64) = (C_STAR, D_STAR);

/// Jacobian of the `(c̄, d̄)` system at its fixed point.
pub fn cd_linearization() -> [[f64; 2]; 2] {
    [[-0.5, 1.0], [-2.5, 0.0]]
}

/// Eigenvalues of a real 2×2 matrix as `(re, im)` pairs, the `+im` root first.
pub fn eigenvalues_2x2(m: [[f64; 2]; 2]) -> [(f64, f64); 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = 0.25 * tr * tr - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [(0.5 * tr + s, 0.0), (0.5 * tr - s, 0.0)]
    } else {
        let s = (-disc).sqrt();
        [(0.5 * tr, s), (0.5 * tr, -s)]
    }
}

/// Oscillation period `2π/|Im λ|` of the linearized spiral.
pub fn cd_linear_period() -> f64 {
    let [(_, im), _] = eigenvalues_2x2(cd_linearization());
    2.0 * std::f64::consts::PI / im.abs()
}

/// Nonlinear remainder of the shifted `(c, d)` system, `(10c − 10d + 3√10)/4·c² − √10·cd`.
pub fn f_cd(c: f64, d: f64) -> f64 {
    let r10 = 10f64.sqrt();
    (10.0 * c - 10.0 * d + 3.0 * r10) / 4.0 * c * c - r10 * c * d
}

/// Integrates the `(c̄, d̄)` system from `tau0 = 0`.
pub fn cd_ode(
    c0: f64,
    d0: f64,
    tau_end: f64,
    tol: f64,
    dtau_out: f64,
) -> Result<ReferenceTrajectory, OracleError> {
    check_interval(0.0, tau_end, tol)?;
    if c0.abs() < 1e-6 {
        return Err(OracleError::Singular { tau: 0.0 });
    }
    let mut solver = Dopri5::from_param(
        CdSystem,
        0.0,
        tau_end,
        dtau_out,
        CdState::from([c0, d0]),
        tol,
        tol * 1e-2,
        0.9,
        0.04,
        0.2,
        10.0,
        f64::INFINITY,
        0.0,
        10_000_000,
        u32::MAX,
        ode_solvers::dop_shared::OutputType::Dense,
    );
    solver.integrate().map_err(integrator_error)?;
    let taus = solver.x_out().clone();
    let values: Vec<Vec<f64>> = solver.y_out().iter().map(|y| vec![y[0], y[1]]).collect();
    if let (Some(&t), Some(row)) = (taus.last(), values.last()) {
        if row[0].abs() < 1e-6 || values.iter().any(|r| !r[0].is_finite() || !r[1].is_finite()) {
            return Err(OracleError::Singular { tau: t });
        }
        if tau_end - t > 1e-9 * tau_end.max(1.0) {
            return Err(OracleError::Singular { tau: t });
        }
    }
    Ok(ReferenceTrajectory { taus, values })
}
