//! First-order evolution system, CFL-limited RK4 stepping and the evolve driver.
//!
//! State variables are `V, Q, ρ, l` and the momenta `π_V = e^ρ V_τ`,
//! `π_Q = e^{ρ+2(V−τ)} Q_τ`. The momentum fluxes are differenced in flux
//! form so `Σ_j ∂_τ π_Q` telescopes. The momentum constraint is monitored,
//! never imposed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::fields::{deriv_into, FieldState, FieldsError, Spectral};

/// Largest admissible `e^{2(τ−ρ)} · max|field|²`.
const RANGE_LIMIT: f64 = 1e300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("non-finite value in `{field}` at tau = {tau}")]
    NonFinite { tau: f64, field: &'static str },
    #[error("e^(2(tau-rho)) out of range at tau = {tau}")]
    Range { tau: f64 },
    #[error("step limit {steps} reached at tau = {tau}; partial state returned")]
    MaxSteps {
        tau: f64,
        steps: u64,
        partial: Box<FieldState>,
    },
    #[error("time step must be positive and finite, got {0}")]
    BadTimestep(f64),
    #[error("invalid evolution config: {0}")]
    BadConfig(String),
    #[error("tau_end = {tau_end} must exceed the state's tau = {tau}")]
    BadEndTime { tau: f64, tau_end: f64 },
    #[error(transparent)]
    State(#[from] FieldsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub cfl_lambda: f64,
    pub output_interval: f64,
    pub max_steps: u64,
    pub filter_enabled: bool,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            cfl_lambda: 0.5,
            output_interval: 0.1,
            max_steps: 100_000_000,
            filter_enabled: false,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        if !(self.cfl_lambda > 0.0 && self.cfl_lambda <= 1.0) {
            return Err(EvolutionError::BadConfig(format!(
                "cfl_lambda {} not in (0, 1]",
                self.cfl_lambda
            )));
        }
        if !(self.output_interval > 0.0 && self.output_interval.is_finite()) {
            return Err(EvolutionError::BadConfig(format!(
                "output_interval {} must be positive",
                self.output_interval
            )));
        }
        if self.max_steps == 0 {
            return Err(EvolutionError::BadConfig("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// τ-derivatives of the six state arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub d_v: Vec<f64>,
    pub d_q: Vec<f64>,
    pub d_rho: Vec<f64>,
    pub d_ell: Vec<f64>,
    pub d_pi_v: Vec<f64>,
    pub d_pi_q: Vec<f64>,
}

impl StateDerivative {
    fn zeros(n: usize) -> Self {
        Self {
            d_v: vec![0.0; n],
            d_q: vec![0.0; n],
            d_rho: vec![0.0; n],
            d_ell: vec![0.0; n],
            d_pi_v: vec![0.0; n],
            d_pi_q: vec![0.0; n],
        }
    }

    fn arrays(&self) -> [&[f64]; 6] {
        [
            &self.d_v,
            &self.d_q,
            &self.d_rho,
            &self.d_ell,
            &self.d_pi_v,
            &self.d_pi_q,
        ]
    }

    fn check_finite(&self, tau: f64) -> Result<(), EvolutionError> {
        const NAMES: [&str; 6] = ["d_V", "d_Q", "d_rho", "d_ell", "d_pi_V", "d_pi_Q"];
        for (name, a) in NAMES.iter().zip(self.arrays()) {
            if !a.iter().sum::<f64>().is_finite() {
                return Err(EvolutionError::NonFinite { tau, field: name });
            }
        }
        Ok(())
    }
}

/// Scratch buffers for one right-hand-side evaluation.
#[derive(Debug, Clone)]
struct RhsScratch {
    v_theta: Vec<f64>,
    q_theta: Vec<f64>,
    flux_v: Vec<f64>,
    flux_q: Vec<f64>,
}

impl RhsScratch {
    fn new(n: usize) -> Self {
        Self {
            v_theta: vec![0.0; n],
            q_theta: vec![0.0; n],
            flux_v: vec![0.0; n],
            flux_q: vec![0.0; n],
        }
    }
}

fn range_check(state: &FieldState) -> Result<(), EvolutionError> {
    let gap = state
        .rho
        .iter()
        .fold(f64::NEG_INFINITY, |m, r| m.max(state.tau - r));
    let field_max = state
        .arrays()
        .iter()
        .flat_map(|(_, a)| a.iter())
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    if 2.0 * gap > RANGE_LIMIT.ln() - 2.0 * field_max.ln() {
        return Err(EvolutionError::Range { tau: state.tau });
    }
    Ok(())
}

fn rhs_into(
    state: &FieldState,
    out: &mut StateDerivative,
    scratch: &mut RhsScratch,
) -> Result<(), EvolutionError> {
    range_check(state)?;
    let n = state.n_points();
    let h = state.grid.spacing();
    let tau = state.tau;
    let kappa = state.kappa();
    let e2t = (2.0 * tau).exp();
    deriv_into(&state.v, h, &mut scratch.v_theta);
    deriv_into(&state.q, h, &mut scratch.q_theta);
    for i in 0..n {
        let em = (-state.rho[i]).exp();
        let ev = (2.0 * (state.v[i] - tau)).exp();
        let pi_v = state.pi_v[i];
        let pi_q = state.pi_q[i];
        let vth = scratch.v_theta[i];
        let qth = scratch.q_theta[i];

        let vt = pi_v * em;
        let qt = pi_q * em / ev;
        // e^{2τ−ρ} V_θ and e^{2V−ρ} Q_θ
        let flux_v = e2t * em * vth;
        let flux_q = ev * e2t * em * qth;
        scratch.flux_v[i] = flux_v;
        scratch.flux_q[i] = flux_q;

        let two_j = vt * vt + (flux_v * vth + pi_q * qt + flux_q * qth) * em;
        let rho_tau = kappa * state.ell[i].exp();

        out.d_v[i] = vt;
        out.d_q[i] = qt;
        out.d_rho[i] = rho_tau;
        out.d_ell[i] = 0.5 * two_j - rho_tau - 2.0;
        // Q-source e^{2(V−τ)+ρ}(Q_τ² − e^{2(τ−ρ)}Q_θ²); flux part added below
        out.d_pi_v[i] = pi_q * qt - flux_q * qth;
    }
    deriv_into(&scratch.flux_q, h, &mut out.d_pi_q);
    deriv_into(&scratch.flux_v, h, &mut scratch.v_theta);
    for (d, f) in out.d_pi_v.iter_mut().zip(&scratch.v_theta) {
        *d += f;
    }
    out.check_finite(tau)
}

/// Right-hand side of the evolution system.
pub fn rhs(state: &FieldState) -> Result<StateDerivative, EvolutionError> {
    let n = state.n_points();
    let mut out = StateDerivative::zeros(n);
    rhs_into(state, &mut out, &mut RhsScratch::new(n))?;
    Ok(out)
}

/// `λ · Δθ / max_j e^{τ−ρ_j}`.
pub fn cfl_dt(state: &FieldState, cfl_lambda: f64) -> f64 {
    cfl_lambda * state.grid.spacing() * (state.rho_min() - state.tau).exp()
}

/// Classical four-stage Runge–Kutta integrator with reusable buffers.
#[derive(Debug, Clone)]
pub struct Stepper {
    k: [StateDerivative; 4],
    stage: FieldState,
    scratch: RhsScratch,
    filter: Option<Spectral>,
}

impl Stepper {
    pub fn new(template: &FieldState, filter_enabled: bool) -> Self {
        let n = template.n_points();
        Self {
            k: std::array::from_fn(|_| StateDerivative::zeros(n)),
            stage: template.clone(),
            scratch: RhsScratch::new(n),
            filter: filter_enabled.then(|| Spectral::new(&template.grid)),
        }
    }

    fn load_stage(&mut self, base: &FieldState, k: usize, a: f64) {
        let src = self.k[k].arrays();
        self.stage.tau = base.tau;
        for ((dst, (_, b)), d) in self.stage.arrays_mut().into_iter().zip(base.arrays()).zip(src) {
            for ((x, bx), dx) in dst.iter_mut().zip(b).zip(d) {
                *x = bx + a * dx;
            }
        }
    }

    /// Advances `state` in place by `dt`.
    pub fn step(&mut self, state: &mut FieldState, dt: f64) -> Result<(), EvolutionError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(EvolutionError::BadTimestep(dt));
        }
        let [k1, ..] = &mut self.k;
        rhs_into(state, k1, &mut self.scratch)?;
        for (s, (c, a)) in [(0.5, 0.5), (0.5, 0.5), (1.0, 1.0)].into_iter().enumerate() {
            self.load_stage(state, s, a * dt);
            self.stage.tau = state.tau + c * dt;
            let (stage, scratch) = (&self.stage, &mut self.scratch);
            rhs_into(stage, &mut self.k[s + 1], scratch)?;
        }
        let w = dt / 6.0;
        let [k1, k2, k3, k4] = &self.k;
        let ks = [k1.arrays(), k2.arrays(), k3.arrays(), k4.arrays()];
        for (f, dst) in state.arrays_mut().into_iter().enumerate() {
            for (i, x) in dst.iter_mut().enumerate() {
                *x += w * (ks[0][f][i] + 2.0 * ks[1][f][i] + 2.0 * ks[2][f][i] + ks[3][f][i]);
            }
        }
        state.tau += dt;
        if let Some(sp) = &self.filter {
            for a in state.arrays_mut() {
                sp.low_pass(a);
            }
        }
        Ok(())
    }
}

/// One RK4 step returning a new state.
pub fn step_rk4(state: &FieldState, dt: f64) -> Result<FieldState, EvolutionError> {
    let mut next = state.clone();
    Stepper::new(state, false).step(&mut next, dt)?;
    Ok(next)
}

/// Evolves to `tau_end`, calling `on_record` at `τ₀ + k·interval` and at `tau_end`.
///
/// Records are computed with `rho0_ref` fixed to the initial `min ρ`.
pub fn evolve<F>(
    state: FieldState,
    tau_end: f64,
    config: &EvolutionConfig,
    mut on_record: F,
) -> Result<FieldState, EvolutionError>
where
    F: FnMut(&FieldState, &DiagnosticsRecord),
{
    config.validate()?;
    state.validate()?;
    if !(tau_end > state.tau) {
        return Err(EvolutionError::BadEndTime {
            tau: state.tau,
            tau_end,
        });
    }
    let mut state = state;
    let tau0 = state.tau;
    let rho0_ref = state.rho_min();
    let mut stepper = Stepper::new(&state, config.filter_enabled);
    on_record(&state, &diagnostics::record(&state, rho0_ref));

    let snap = 1e-9 * config.output_interval;
    let mut steps = 0u64;
    let mut k = 1u64;
    loop {
        let mut target = tau0 + k as f64 * config.output_interval;
        if target > tau_end - snap {
            target = tau_end;
        }
        while state.tau < target {
            if steps >= config.max_steps {
                return Err(EvolutionError::MaxSteps {
                    tau: state.tau,
                    steps,
                    partial: Box::new(state),
                });
            }
            let remaining = target - state.tau;
            let dt = cfl_dt(&state, config.cfl_lambda);
            if dt >= remaining {
                stepper.step(&mut state, remaining)?;
                state.tau = target;
            } else {
                stepper.step(&mut state, dt)?;
            }
            steps += 1;
        }
        on_record(&state, &diagnostics::record(&state, rho0_ref));
        if target == tau_end {
            return Ok(state);
        }
        k += 1;
    }
}
