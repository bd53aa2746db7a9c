//! Monitored scalars of a [`FieldState`]: conserved quantities, the energy
//! hierarchy with its correction, the normalized attractor variables `c, d`,
//! the bootstrap bound functions and the weighted plot quantities.
//!
//! Every S¹ integral is a discrete mean on the unit-measure grid.

use crate::fields::{deriv_into, raw_mean, FieldState};

/// `2/√10`, the `c̄` coordinate of the attractor fixed point.
pub const C_STAR: f64 = 0.632_455_532_033_675_9;
/// `1/√10`, the `d̄` coordinate of the attractor fixed point.
pub const D_STAR: f64 = 0.316_227_766_016_837_94;

/// Pointwise quantities every diagnostic is assembled from.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub tau: f64,
    pub v_tau: Vec<f64>,
    pub q_tau: Vec<f64>,
    pub v_theta: Vec<f64>,
    pub q_theta: Vec<f64>,
    pub ell_theta: Vec<f64>,
    pub rho_tau: Vec<f64>,
    /// `J = ½[V_τ² + e^{2(τ−ρ)}V_θ² + e^{2(V−τ)}(Q_τ² + e^{2(τ−ρ)}Q_θ²)]`
    pub j: Vec<f64>,
    /// `V_τ² + e^{2(τ−ρ)}V_θ²`
    pub v_energy: Vec<f64>,
    /// `e^{2(V−τ)}(Q_τ² + e^{2(τ−ρ)}Q_θ²)`
    pub q_energy: Vec<f64>,
}

impl Kinematics {
    pub fn new(state: &FieldState) -> Self {
        let n = state.n_points();
        let h = state.grid.spacing();
        let tau = state.tau;
        let mut v_theta = vec![0.0; n];
        let mut q_theta = vec![0.0; n];
        let mut ell_theta = vec![0.0; n];
        deriv_into(&state.v, h, &mut v_theta);
        deriv_into(&state.q, h, &mut q_theta);
        deriv_into(&state.ell, h, &mut ell_theta);
        let v_tau = state.v_tau();
        let q_tau = state.q_tau();
        let kappa = state.kappa();
        let rho_tau: Vec<f64> = state.ell.iter().map(|l| kappa * l.exp()).collect();
        let mut v_energy = vec![0.0; n];
        let mut q_energy = vec![0.0; n];
        let mut j = vec![0.0; n];
        for i in 0..n {
            let speed2 = (2.0 * (tau - state.rho[i])).exp();
            let wq = (2.0 * (state.v[i] - tau)).exp();
            v_energy[i] = v_tau[i].powi(2) + speed2 * v_theta[i].powi(2);
            q_energy[i] = wq * (q_tau[i].powi(2) + speed2 * q_theta[i].powi(2));
            j[i] = 0.5 * (v_energy[i] + q_energy[i]);
        }
        Self {
            tau,
            v_tau,
            q_tau,
            v_theta,
            q_theta,
            ell_theta,
            rho_tau,
            j,
            v_energy,
            q_energy,
        }
    }

    /// Pointwise momentum-constraint defect `l_θ − (V_θV_τ + e^{2(V−τ)}Q_θQ_τ)`.
    pub fn constraint_defect(&self, state: &FieldState) -> Vec<f64> {
        (0..state.n_points())
            .map(|i| {
                let rhs = self.v_theta[i] * self.v_tau[i]
                    + (2.0 * (state.v[i] - self.tau)).exp() * self.q_theta[i] * self.q_tau[i];
                self.ell_theta[i] - rhs
            })
            .collect()
    }
}

fn mean_of<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    (0..n).map(f).sum::<f64>() / n as f64
}

/// `A = ⟨π_V − π_Q Q⟩`, `B = ⟨π_Q⟩`.
pub fn conserved_ab(state: &FieldState) -> (f64, f64) {
    let n = state.n_points();
    let a = mean_of(n, |i| state.pi_v[i] - state.pi_q[i] * state.q[i]);
    let b = raw_mean(&state.pi_q);
    (a, b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySuite {
    pub energy: f64,
    pub volume: f64,
    pub twist_y: f64,
    pub correction: f64,
    pub corrected_h: f64,
    /// NaN unless `cd_defined`.
    pub c_var: f64,
    pub d_var: f64,
    pub omega: f64,
    /// False when `H ≤ 0`, where `c` and `d` are meaningless.
    pub cd_defined: bool,
    /// `Y_τ = ⟨e^{l+ρ+2τ} J⟩`.
    pub y_tau: f64,
}

pub fn energy_suite(state: &FieldState) -> EnergySuite {
    energy_suite_with(state, &Kinematics::new(state))
}

pub fn energy_suite_with(state: &FieldState, k: &Kinematics) -> EnergySuite {
    let n = state.n_points();
    let tau = state.tau;
    let energy = mean_of(n, |i| (state.rho[i] - 2.0 * tau).exp() * k.j[i]);
    let volume = mean_of(n, |i| state.rho[i].exp());
    let twist_y = mean_of(n, |i| (state.ell[i] + state.rho[i] + 2.0 * tau).exp());
    let v_mean = raw_mean(&state.v);
    let correction = 0.5
        * (-2.0 * tau).exp()
        * mean_of(n, |i| k.v_tau[i] * (state.v[i] - v_mean - 1.0) * state.rho[i].exp());
    let corrected_h = volume * (energy + correction);
    let y_tau = mean_of(n, |i| {
        (state.ell[i] + state.rho[i] + 2.0 * tau).exp() * k.j[i]
    });
    let omega = y_tau - (2.0 * tau).exp() * energy * twist_y / volume;
    let cd_defined = corrected_h > 0.0;
    let (c_var, d_var) = if cd_defined {
        let root_h = corrected_h.sqrt();
        (
            volume / (tau.exp() * root_h) - C_STAR,
            twist_y / ((3.0 * tau).exp() * root_h) - D_STAR,
        )
    } else {
        (f64::NAN, f64::NAN)
    };
    EnergySuite {
        energy,
        volume,
        twist_y,
        correction,
        corrected_h,
        c_var,
        d_var,
        omega,
        cd_defined,
        y_tau,
    }
}

/// Plot quantities weighted by the volume form `e^{ρ−τ/2} dθ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BergerSuite {
    pub s_diag: f64,
    pub t_diag: f64,
    pub ev_diag: f64,
    pub eq_diag: f64,
    /// `−∞` when `⟨V_τ e^{ρ−τ/2}⟩ = 0`.
    pub w_diag: f64,
}

pub fn berger_suite(state: &FieldState) -> BergerSuite {
    berger_suite_with(state, &Kinematics::new(state))
}

pub fn berger_suite_with(state: &FieldState, k: &Kinematics) -> BergerSuite {
    let n = state.n_points();
    let w: Vec<f64> = state
        .rho
        .iter()
        .map(|r| (r - 0.5 * state.tau).exp())
        .collect();
    // S and T from the product rule: ∂_τ(f e^{ρ−τ/2}) = (f_τ + f(ρ_τ − ½)) e^{ρ−τ/2}
    let s_diag = mean_of(n, |i| {
        let ell_tau = k.j[i] - k.rho_tau[i] - 2.0;
        (ell_tau + state.ell[i] * (k.rho_tau[i] - 0.5)) * w[i]
    });
    let t_diag = mean_of(n, |i| {
        (k.rho_tau[i] + state.rho[i] * (k.rho_tau[i] - 0.5)) * w[i]
    });
    let ev_diag = mean_of(n, |i| k.v_energy[i] * w[i]);
    let eq_diag = mean_of(n, |i| k.q_energy[i] * w[i]);
    let w_arg = mean_of(n, |i| k.v_tau[i] * w[i]);
    BergerSuite {
        s_diag,
        t_diag,
        ev_diag,
        eq_diag,
        w_diag: w_arg.abs().ln(),
    }
}

/// Max-norm of the discrete momentum-constraint defect.
pub fn constraint_residual(state: &FieldState) -> f64 {
    Kinematics::new(state)
        .constraint_defect(state)
        .iter()
        .fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapBounds {
    pub f_bound: f64,
    pub f_tilde_bound: f64,
    pub omega_bound_ok: bool,
    /// `e^τ E Y_τ`, the right side of the Ω inequality.
    pub omega_bound: f64,
}

/// `F`, `F̃` and the Ω inequality. `rho0_ref` is the run's initial `min ρ`.
pub fn bootstrap_bounds(state: &FieldState, rho0_ref: f64) -> BootstrapBounds {
    let k = Kinematics::new(state);
    let es = energy_suite_with(state, &k);
    let (a, _) = conserved_ab(state);
    bootstrap_bounds_with(state, &k, &es, a, rho0_ref)
}

fn bootstrap_bounds_with(
    state: &FieldState,
    k: &Kinematics,
    es: &EnergySuite,
    a_const: f64,
    rho0_ref: f64,
) -> BootstrapBounds {
    let n = state.n_points();
    let tau = state.tau;
    let pi = es.volume;
    let e = es.energy;
    let pi_tau = (-2.0 * tau).exp() * es.twist_y;
    let pe = (pi * e).max(0.0);
    let grow = (2.0 * pe.sqrt()).exp();
    let decay0 = (-0.5 * rho0_ref).exp();
    let j_term = mean_of(n, |i| (state.rho[i] - tau).exp() * k.rho_tau[i] * k.j[i]);
    let f_bound = j_term
        + (-tau).exp() * (1.0 + grow) * (pi + pi_tau)
        + pe.sqrt()
        + decay0 * grow * pi * e.sqrt();
    let f_tilde_bound =
        a_const.abs() * pi * ((-tau).exp() * (1.0 + pi_tau / pi) + decay0 * e.sqrt());

    let omega_bound = tau.exp() * e * es.y_tau;
    // The continuum inequality needs the constraint; allow for its discrete defect.
    let residual = k
        .constraint_defect(state)
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let e_l_max = state.ell.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x)).exp();
    // |Ω| ≤ e^{4τ}E·TV(e^l) and TV(e^l) ≤ ⟨e^{l+ρ−τ}J⟩ + max(e^l)·residual
    let slack = (4.0 * tau).exp() * e * e_l_max * residual
        + 1e-6 * omega_bound
        + 1e-9 * es.omega.abs();
    BootstrapBounds {
        f_bound,
        f_tilde_bound,
        omega_bound_ok: es.omega.abs() <= omega_bound + slack,
        omega_bound,
    }
}

/// One time slice of every monitored scalar. Field order matches the CSV columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub tau: f64,
    pub a_const: f64,
    pub b_const: f64,
    pub energy: f64,
    pub volume: f64,
    pub twist_y: f64,
    pub correction: f64,
    pub corrected_h: f64,
    pub c_var: f64,
    pub d_var: f64,
    pub omega: f64,
    pub f_bound: f64,
    pub f_tilde_bound: f64,
    pub s_diag: f64,
    pub t_diag: f64,
    pub ev_diag: f64,
    pub eq_diag: f64,
    pub w_diag: f64,
    pub constraint_residual: f64,
    pub rho_min: f64,
    pub el_wmean: f64,
    pub j_wmean: f64,
    pub v_mean: f64,
    /// `⟨e^l e^{ρ−τ/2}⟩`, unnormalized.
    pub el_wraw: f64,
    /// `⟨J e^{ρ−τ/2}⟩`, unnormalized.
    pub j_wraw: f64,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 25] = [
        "tau",
        "A",
        "B",
        "E",
        "Pi",
        "Y",
        "Lambda",
        "H",
        "c",
        "d",
        "Omega",
        "F",
        "Ftilde",
        "S",
        "T",
        "EV",
        "EQ",
        "W",
        "constraint_residual",
        "rho_min",
        "el_wmean",
        "j_wmean",
        "v_mean",
        "el_wraw",
        "j_wraw",
    ];

    pub fn values(&self) -> [f64; 25] {
        [
            self.tau,
            self.a_const,
            self.b_const,
            self.energy,
            self.volume,
            self.twist_y,
            self.correction,
            self.corrected_h,
            self.c_var,
            self.d_var,
            self.omega,
            self.f_bound,
            self.f_tilde_bound,
            self.s_diag,
            self.t_diag,
            self.ev_diag,
            self.eq_diag,
            self.w_diag,
            self.constraint_residual,
            self.rho_min,
            self.el_wmean,
            self.j_wmean,
            self.v_mean,
            self.el_wraw,
            self.j_wraw,
        ]
    }

    pub fn from_values(v: &[f64; 25]) -> Self {
        Self {
            tau: v[0],
            a_const: v[1],
            b_const: v[2],
            energy: v[3],
            volume: v[4],
            twist_y: v[5],
            correction: v[6],
            corrected_h: v[7],
            c_var: v[8],
            d_var: v[9],
            omega: v[10],
            f_bound: v[11],
            f_tilde_bound: v[12],
            s_diag: v[13],
            t_diag: v[14],
            ev_diag: v[15],
            eq_diag: v[16],
            w_diag: v[17],
            constraint_residual: v[18],
            rho_min: v[19],
            el_wmean: v[20],
            j_wmean: v[21],
            v_mean: v[22],
            el_wraw: v[23],
            j_wraw: v[24],
        }
    }
}

/// Full record; `rho0_ref` is the initial `min ρ` of the run.
pub fn record(state: &FieldState, rho0_ref: f64) -> DiagnosticsRecord {
    let n = state.n_points();
    let tau = state.tau;
    let k = Kinematics::new(state);
    let (a_const, b_const) = conserved_ab(state);
    let es = energy_suite_with(state, &k);
    let bs = berger_suite_with(state, &k);
    let bb = bootstrap_bounds_with(state, &k, &es, a_const, rho0_ref);
    let residual = k
        .constraint_defect(state)
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let w_half: Vec<f64> = state.rho.iter().map(|r| (r - 0.5 * tau).exp()).collect();
    let w_half_mean = raw_mean(&w_half);
    let el_wraw = mean_of(n, |i| state.ell[i].exp() * w_half[i]);
    let j_wraw = mean_of(n, |i| k.j[i] * w_half[i]);
    let w_energy_mean = mean_of(n, |i| (state.rho[i] - 2.0 * tau).exp());
    DiagnosticsRecord {
        tau,
        a_const,
        b_const,
        energy: es.energy,
        volume: es.volume,
        twist_y: es.twist_y,
        correction: es.correction,
        corrected_h: es.corrected_h,
        c_var: es.c_var,
        d_var: es.d_var,
        omega: es.omega,
        f_bound: bb.f_bound,
        f_tilde_bound: bb.f_tilde_bound,
        s_diag: bs.s_diag,
        t_diag: bs.t_diag,
        ev_diag: bs.ev_diag,
        eq_diag: bs.eq_diag,
        w_diag: bs.w_diag,
        constraint_residual: residual,
        rho_min: state.rho_min(),
        el_wmean: el_wraw / w_half_mean,
        j_wmean: es.energy / w_energy_mean,
        v_mean: raw_mean(&state.v),
        el_wraw,
        j_wraw,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{weighted_mean, PeriodicGrid};
    use std::f64::consts::PI;

    fn kasner(rho0: f64) -> FieldState {
        let g = PeriodicGrid::new(32).unwrap();
        FieldState::homogeneous(g, 0.0, 0.0, 0.0, rho0, 0.0, rho0.exp(), 0.0, false).unwrap()
    }

    fn wavy() -> FieldState {
        let g = PeriodicGrid::new(64).unwrap();
        let th = g.thetas();
        let f = |a: f64, m: f64, p: f64| -> Vec<f64> {
            th.iter().map(|t| a * (2.0 * PI * m * t + p).sin()).collect()
        };
        let rho: Vec<f64> = f(0.2, 1.0, 0.3).iter().map(|x| x + 0.4).collect();
        let ell: Vec<f64> = f(0.1, 2.0, 0.1).iter().map(|x| x - 0.7).collect();
        let pi_q: Vec<f64> = f(0.3, 1.0, 1.0).iter().map(|x| x + 0.05).collect();
        FieldState::new(
            g,
            0.8,
            f(0.5, 1.0, 0.0),
            f(0.4, 2.0, 0.5),
            rho,
            ell,
            f(0.6, 3.0, 0.2),
            pi_q,
            true,
        )
        .unwrap()
    }

    #[test]
    fn kasner_conserved_and_energies() {
        let rho0 = 0.3f64;
        let s = kasner(rho0);
        let (a, b) = conserved_ab(&s);
        assert!((a - rho0.exp()).abs() < 1e-15);
        assert_eq!(b, 0.0);
        let es = energy_suite(&s);
        assert!((es.energy - 0.5 * rho0.exp()).abs() < 1e-15);
        assert!((es.volume - rho0.exp()).abs() < 1e-15);
        assert!((es.correction + 0.5 * rho0.exp()).abs() < 1e-15);
        assert!(es.corrected_h.abs() < 1e-15);
        assert!(!es.cd_defined);
        assert!(es.c_var.is_nan());
    }

    #[test]
    fn kasner_w_equals_rho0() {
        let s = kasner(-0.4);
        let bs = berger_suite(&s);
        assert!((bs.w_diag + 0.4).abs() < 1e-14);
        assert_eq!(bs.eq_diag, 0.0);
        // homogeneous: E_V = V_τ² e^{ρ−τ/2}
        assert!((bs.ev_diag - (-0.4f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn homogeneous_omega_vanishes() {
        let g = PeriodicGrid::new(16).unwrap();
        let s = FieldState::homogeneous(g, 1.3, 0.2, 0.5, 0.7, -0.3, 0.9, 0.4, true).unwrap();
        let es = energy_suite(&s);
        assert!(es.omega.abs() < 1e-12 * es.y_tau.abs());
        let bb = bootstrap_bounds(&s, 0.7);
        assert!(bb.omega_bound_ok);
        assert!(constraint_residual(&s) == 0.0);
    }

    #[test]
    fn c_and_d_vanish_at_attractor_normalization() {
        // Choose Π = (2/√10)e^τ√H and Y = (1/√10)e^{3τ}√H by fixing ρ and l.
        let g = PeriodicGrid::new(16).unwrap();
        let tau = 0.5f64;
        let mut s = FieldState::homogeneous(g, tau, 0.0, 0.0, 0.0, 0.0, 0.3, 0.0, true).unwrap();
        // homogeneous polarised: E = ½e^{ρ−2τ}V_τ², Λ = −½e^{−2τ}π_V, H = Π(E+Λ)
        // pick π_V so H > 0 then solve for ρ and l
        s.pi_v = vec![-2.0; 16];
        for _ in 0..200 {
            let es = energy_suite(&s);
            let target_pi = C_STAR * tau.exp() * es.corrected_h.sqrt();
            let rho = target_pi.ln();
            s.rho = vec![rho; 16];
            let es = energy_suite(&s);
            let target_y = D_STAR * (3.0 * tau).exp() * es.corrected_h.sqrt();
            let ell = target_y.ln() - rho - 2.0 * tau;
            s.ell = vec![ell; 16];
        }
        let es = energy_suite(&s);
        assert!(es.c_var.abs() < 1e-10, "{}", es.c_var);
        assert!(es.d_var.abs() < 1e-10, "{}", es.d_var);
    }

    #[test]
    fn energy_equals_weighted_mean_of_j() {
        let s = wavy();
        let k = Kinematics::new(&s);
        let w: Vec<f64> = s.rho.iter().map(|r| (r - 2.0 * s.tau).exp()).collect();
        let e = weighted_mean(&k.j, &w).unwrap();
        assert!((e - energy_suite(&s).energy).abs() < 1e-14 * e);
    }

    #[test]
    fn record_h_is_product() {
        let s = wavy();
        let r = record(&s, s.rho_min());
        assert_eq!(r.corrected_h, r.volume * (r.energy + r.correction));
        assert!(r.energy >= 0.0 && r.volume > 0.0 && r.twist_y > 0.0);
        assert!(r.f_bound >= 0.0 && r.f_tilde_bound >= 0.0);
    }

    #[test]
    fn residual_detects_injected_defect() {
        let g = PeriodicGrid::new(256).unwrap();
        let mut s = FieldState::homogeneous(g, 0.0, 0.1, 0.0, 0.0, 0.0, 0.5, 0.0, true).unwrap();
        for (l, t) in s.ell.iter_mut().zip(g.thetas()) {
            *l += 1e-3 * (2.0 * PI * t).sin();
        }
        let r = constraint_residual(&s);
        assert!((r - 2.0 * PI * 1e-3).abs() < 1e-8, "{r}");
    }

    #[test]
    fn correction_identity_on_wavy_state() {
        let s = wavy();
        let es = energy_suite(&s);
        let n = s.n_points() as f64;
        let vt = s.v_tau();
        let vbar = s.v.iter().sum::<f64>() / n;
        let lhs = es.correction
            + vt.iter()
                .zip(&s.rho)
                .map(|(v, r)| 0.5 * (r - 2.0 * s.tau).exp() * v)
                .sum::<f64>()
                / n;
        let rhs = 0.5 * (-2.0 * s.tau).exp()
            * vt.iter()
                .zip(&s.v)
                .zip(&s.rho)
                .map(|((vt, v), r)| vt * (v - vbar) * r.exp())
                .sum::<f64>()
            / n;
        assert!((lhs - rhs).abs() < 1e-14);
    }
}
