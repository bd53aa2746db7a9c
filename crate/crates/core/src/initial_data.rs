//! Constraint-satisfying initial data.
//!
//! Random modes draw Fourier series from a seeded ChaCha20 stream, fix the
//! momentum constraint `l_θ = e^{−ρ}(V_θπ_V + Q_θπ_Q)` by a one-parameter
//! projection of `π_V` followed by a quadrature for `l`, and pin the
//! conserved quantity `B = ⟨π_Q⟩` by a mean shift.
//!
//! Random stream contract: field `k` (V = 0, Q = 1, π_V = 2, π_Q = 3, ρ = 4)
//! uses `ChaCha20Rng::seed_from_u64(seed)` with `set_stream(k)`. Each normal
//! deviate consumes two `u64` draws `x1, x2`; with `u = (x >> 11)·2⁻⁵³`
//! it is `sqrt(−2 ln(1 − u1)) · cos(2π u2)`. Coefficients are drawn in the
//! order `a_1, b_1, a_2, b_2, …`.

use std::f64::consts::{LN_10, PI};
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{conserved_ab, energy_suite};
use crate::fields::{deriv_theta, raw_mean, FieldState, FieldsError, PeriodicGrid, Spectral};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InitialDataError {
    #[error("invalid sampler input: {0}")]
    Usage(String),
    #[error("momentum constraint unsolvable: obstruction {obstruction:e} with constant V")]
    ConstraintUnsolvable { obstruction: f64 },
    #[error("could not place data near the attractor: {0}")]
    AttractorUnreachable(String),
    #[error(transparent)]
    Fields(#[from] FieldsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    Kasner,
    PolarisedRandom,
    B0Random,
    GenericRandom,
    PseudoHomogeneous,
    NearAttractor,
}

impl SamplerMode {
    pub fn name(&self) -> &'static str {
        match self {
            SamplerMode::Kasner => "kasner",
            SamplerMode::PolarisedRandom => "polarised_random",
            SamplerMode::B0Random => "b0_random",
            SamplerMode::GenericRandom => "generic_random",
            SamplerMode::PseudoHomogeneous => "pseudo_homogeneous",
            SamplerMode::NearAttractor => "near_attractor",
        }
    }
}

impl FromStr for SamplerMode {
    type Err = InitialDataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "kasner" => SamplerMode::Kasner,
            "polarised" | "polarised_random" => SamplerMode::PolarisedRandom,
            "b0" | "b0_random" => SamplerMode::B0Random,
            "generic" | "generic_random" => SamplerMode::GenericRandom,
            "ph" | "pseudo_homogeneous" => SamplerMode::PseudoHomogeneous,
            "near" | "near_attractor" => SamplerMode::NearAttractor,
            other => return Err(InitialDataError::Usage(format!("unknown mode `{other}`"))),
        })
    }
}

/// Quadrature used to integrate the momentum constraint for `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Cumulative trapezoid rule, second order.
    #[default]
    Trapezoid,
    /// FFT antiderivative, spectrally accurate.
    Spectral,
}

/// Recipe for one initial data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub mode: SamplerMode,
    pub seed: u64,
    pub m_max: usize,
    pub amplitude: f64,
    pub target_b: f64,
    /// Additive constant of `l`: `l(θ=0)` for random modes, `⟨e^l⟩_ρ = e^{ell_mean}`
    /// for `near_attractor`.
    pub ell_mean: f64,
    pub rho0: f64,
    /// Amplitude of a Fourier perturbation of the initial `ρ` profile.
    pub rho_amplitude: f64,
    pub kasner_a: f64,
    pub kasner_b: f64,
    pub kasner_c: f64,
    /// Initial areal time.
    pub tau0: f64,
    /// Value of `c` that `near_attractor` places the data at; `d = c/2` follows
    /// from the `l` normalization.
    pub attractor_c: f64,
    pub quadrature: Quadrature,
}

impl SamplerSpec {
    /// Mode-dependent defaults: `near_attractor` starts at `τ₀ = ln 10`, `ρ₀ = 0.9`.
    pub fn new(mode: SamplerMode, seed: u64) -> Self {
        let near = mode == SamplerMode::NearAttractor;
        Self {
            mode,
            seed,
            m_max: 8,
            amplitude: 0.1,
            target_b: 0.0,
            ell_mean: 0.5f64.ln(),
            rho0: if near { 0.9 } else { 0.0 },
            rho_amplitude: 0.0,
            kasner_a: 1.0,
            kasner_b: 0.0,
            kasner_c: 0.0,
            tau0: if near { LN_10 } else { 0.0 },
            attractor_c: 0.05,
            quadrature: Quadrature::Trapezoid,
        }
    }

    pub fn kasner(a: f64, b: f64, c: f64, rho0: f64) -> Self {
        Self {
            kasner_a: a,
            kasner_b: b,
            kasner_c: c,
            rho0,
            ..Self::new(SamplerMode::Kasner, 0)
        }
    }

    pub fn validate(&self, grid: &PeriodicGrid) -> Result<(), InitialDataError> {
        let randomized = !matches!(
            self.mode,
            SamplerMode::Kasner | SamplerMode::PseudoHomogeneous
        );
        if randomized && (self.m_max == 0 || 4 * self.m_max >= grid.n_points()) {
            return Err(InitialDataError::Usage(format!(
                "m_max = {} must satisfy 0 < m_max < N/4 = {}",
                self.m_max,
                grid.n_points() / 4
            )));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(InitialDataError::Usage("amplitude must be non-negative".into()));
        }
        if matches!(self.mode, SamplerMode::PolarisedRandom | SamplerMode::B0Random)
            && self.target_b != 0.0
        {
            return Err(InitialDataError::Usage(format!(
                "mode {} requires target_b = 0",
                self.mode.name()
            )));
        }
        let finite = [
            self.target_b,
            self.ell_mean,
            self.rho0,
            self.rho_amplitude,
            self.kasner_a,
            self.kasner_b,
            self.kasner_c,
            self.tau0,
            self.attractor_c,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(InitialDataError::Usage("non-finite sampler parameter".into()));
        }
        Ok(())
    }
}

fn unit_uniform(rng: &mut ChaCha20Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn standard_normal(rng: &mut ChaCha20Rng) -> f64 {
    let u1 = unit_uniform(rng);
    let u2 = unit_uniform(rng);
    (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn sample_stream(
    seed: u64,
    stream: u64,
    m_max: usize,
    amplitude: f64,
    grid: &PeriodicGrid,
) -> Result<Vec<f64>, InitialDataError> {
    if m_max == 0 || 4 * m_max >= grid.n_points() {
        return Err(InitialDataError::Usage(format!(
            "spectrum m_max = {m_max} too wide for N = {}",
            grid.n_points()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let coeffs: Vec<(f64, f64)> = (1..=m_max)
        .map(|m| {
            let scale = amplitude / m as f64;
            let a = standard_normal(&mut rng) * scale;
            let b = standard_normal(&mut rng) * scale;
            (a, b)
        })
        .collect();
    Ok(grid
        .thetas()
        .iter()
        .map(|t| {
            coeffs
                .iter()
                .enumerate()
                .map(|(i, (a, b))| {
                    let arg = 2.0 * PI * (i + 1) as f64 * t;
                    a * arg.cos() + b * arg.sin()
                })
                .sum()
        })
        .collect())
}

/// Zero-mean random trigonometric polynomial with modes `1..=m_max`,
/// coefficients `N(0,1)·amplitude/m`.
pub fn sample_fourier(
    seed: u64,
    m_max: usize,
    amplitude: f64,
    grid: &PeriodicGrid,
) -> Result<Vec<f64>, InitialDataError> {
    sample_stream(seed, 0, m_max, amplitude, grid)
}

/// Solves the momentum constraint for `l` after projecting `π_V` along `V_θ`
/// so the integrand has zero mean. Returns `(l, π_V)`.
#[allow(clippy::too_many_arguments)]
pub fn solve_constraint(
    v: &[f64],
    q: &[f64],
    pi_v: &[f64],
    pi_q: &[f64],
    rho: &[f64],
    ell0: f64,
    grid: &PeriodicGrid,
    quadrature: Quadrature,
) -> Result<(Vec<f64>, Vec<f64>), InitialDataError> {
    let n = grid.n_points();
    for a in [q, pi_v, pi_q, rho] {
        if a.len() != n {
            return Err(FieldsError::LengthMismatch {
                expected: n,
                got: a.len(),
            }
            .into());
        }
    }
    let v_theta = deriv_theta(v, grid)?;
    let q_theta = deriv_theta(q, grid)?;
    let weight: Vec<f64> = rho.iter().map(|r| (-r).exp()).collect();
    let integrand = |pv: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| weight[i] * (v_theta[i] * pv[i] + q_theta[i] * pi_q[i]))
            .collect()
    };
    let g = integrand(pi_v);
    let obstruction = raw_mean(&g);
    let stiffness = raw_mean(
        &(0..n)
            .map(|i| weight[i] * v_theta[i] * v_theta[i])
            .collect::<Vec<_>>(),
    );
    let scale = raw_mean(&g.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let mut pi_v = pi_v.to_vec();
    if stiffness > 0.0 {
        let mu = obstruction / stiffness;
        for (p, vt) in pi_v.iter_mut().zip(&v_theta) {
            *p -= mu * vt;
        }
    } else if obstruction.abs() > 1e-14 * scale.max(f64::MIN_POSITIVE) {
        return Err(InitialDataError::ConstraintUnsolvable { obstruction });
    }
    let g = integrand(&pi_v);
    let ell = match quadrature {
        Quadrature::Trapezoid => {
            let h = grid.spacing();
            let mut ell = Vec::with_capacity(n);
            let mut acc = ell0;
            ell.push(acc);
            for j in 1..n {
                acc += 0.5 * h * (g[j - 1] + g[j]);
                ell.push(acc);
            }
            ell
        }
        Quadrature::Spectral => Spectral::new(grid)
            .antiderivative(&g)
            .into_iter()
            .map(|x| x + ell0)
            .collect(),
    };
    Ok((ell, pi_v))
}

struct RandomParts {
    v: Vec<f64>,
    q: Vec<f64>,
    v_rate: Vec<f64>,
    q_rate: Vec<f64>,
    rho: Vec<f64>,
}

fn random_parts(
    spec: &SamplerSpec,
    grid: &PeriodicGrid,
    polarised: bool,
) -> Result<RandomParts, InitialDataError> {
    let n = grid.n_points();
    let draw = |stream| sample_stream(spec.seed, stream, spec.m_max, spec.amplitude, grid);
    let rho = if spec.rho_amplitude != 0.0 {
        sample_stream(spec.seed, 4, spec.m_max, spec.rho_amplitude, grid)?
            .into_iter()
            .map(|x| x + spec.rho0)
            .collect()
    } else {
        vec![spec.rho0; n]
    };
    let (q, q_rate) = if polarised {
        (vec![0.0; n], vec![0.0; n])
    } else {
        (draw(1)?, draw(3)?)
    };
    Ok(RandomParts {
        v: draw(0)?,
        q,
        v_rate: draw(2)?,
        q_rate,
        rho,
    })
}

/// Assembles a constrained state from wave parts scaled by `scale`.
/// `π_Q = e^ρ·scale·q_rate` is shifted to mean `target_b`.
fn assemble(
    parts: &RandomParts,
    scale: f64,
    spec: &SamplerSpec,
    grid: &PeriodicGrid,
) -> Result<FieldState, InitialDataError> {
    let n = grid.n_points();
    let v: Vec<f64> = parts.v.iter().map(|x| scale * x).collect();
    let q: Vec<f64> = parts.q.iter().map(|x| scale * x).collect();
    let pi_v: Vec<f64> = (0..n)
        .map(|i| parts.rho[i].exp() * scale * parts.v_rate[i])
        .collect();
    let mut pi_q: Vec<f64> = (0..n)
        .map(|i| parts.rho[i].exp() * scale * parts.q_rate[i])
        .collect();
    let shift = spec.target_b - raw_mean(&pi_q);
    pi_q.iter_mut().for_each(|p| *p += shift);
    let (ell, pi_v) = solve_constraint(
        &v,
        &q,
        &pi_v,
        &pi_q,
        &parts.rho,
        spec.ell_mean,
        grid,
        spec.quadrature,
    )?;
    Ok(FieldState::new(
        *grid,
        spec.tau0,
        v,
        q,
        parts.rho.clone(),
        ell,
        pi_v,
        pi_q,
        true,
    )?)
}

/// Shifts `l` by a constant so that `⟨e^{l+ρ}⟩/⟨e^ρ⟩ = e^{ell_mean}`.
fn normalize_ell(state: &mut FieldState, ell_mean: f64) {
    let weighted = raw_mean(
        &state
            .ell
            .iter()
            .zip(&state.rho)
            .map(|(l, r)| (l + r).exp())
            .collect::<Vec<_>>(),
    ) / raw_mean(&state.rho.iter().map(|r| r.exp()).collect::<Vec<_>>());
    let shift = ell_mean - weighted.ln();
    state.ell.iter_mut().for_each(|l| *l += shift);
}

/// `c` of a candidate; `+∞` when `H ≤ 0` (too little wave energy).
fn c_of(state: &FieldState) -> f64 {
    let es = energy_suite(state);
    if es.cd_defined {
        es.c_var
    } else {
        f64::INFINITY
    }
}

fn near_attractor(
    parts: &RandomParts,
    spec: &SamplerSpec,
    grid: &PeriodicGrid,
) -> Result<FieldState, InitialDataError> {
    let build = |s: f64| -> Result<FieldState, InitialDataError> {
        let mut st = assemble(parts, s, spec, grid)?;
        normalize_ell(&mut st, spec.ell_mean);
        Ok(st)
    };
    // c decreases as the wave amplitude grows; bracket c = target in log-scale.
    let target = spec.attractor_c;
    if !(target.abs() < 0.1) {
        return Err(InitialDataError::Usage(format!(
            "attractor_c = {target} must lie in (-0.1, 0.1)"
        )));
    }
    let mut lo = 1e-8f64;
    if c_of(&build(lo)?) <= target {
        return Err(InitialDataError::AttractorUnreachable(format!(
            "already past the attractor at vanishing amplitude (target_b = {})",
            spec.target_b
        )));
    }
    let mut hi = 1e-3f64;
    while c_of(&build(hi)?) > target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(InitialDataError::AttractorUnreachable(
                "no amplitude reaches the target c".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if c_of(&build(mid)?) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    let state = build(hi)?;
    let es = energy_suite(&state);
    let scaled_h = state.tau.exp() * es.corrected_h;
    if !(es.c_var.abs() < 0.1 && es.d_var.abs() < 0.1 && (0.5..=2.0).contains(&scaled_h)) {
        return Err(InitialDataError::AttractorUnreachable(format!(
            "c = {:.3e}, d = {:.3e}, e^tau H = {scaled_h:.4} (need |c|,|d| < 0.1, e^tau H in [0.5, 2]; adjust rho0)",
            es.c_var, es.d_var
        )));
    }
    Ok(state)
}

/// Places an arbitrary random state's wave content on the attractor scale
/// (`c = attractor_c`, weighted `⟨e^l⟩ = e^{ell_mean}`) keeping its shape and `B`.
pub fn rescale_to_attractor(
    spec: &SamplerSpec,
    grid: &PeriodicGrid,
    polarised: bool,
) -> Result<FieldState, InitialDataError> {
    spec.validate(grid)?;
    let parts = random_parts(spec, grid, polarised)?;
    near_attractor(&parts, spec, grid)
}

pub fn make_initial_data(
    spec: &SamplerSpec,
    grid: &PeriodicGrid,
) -> Result<FieldState, InitialDataError> {
    spec.validate(grid)?;
    let tau = spec.tau0;
    match spec.mode {
        SamplerMode::Kasner => {
            let a = spec.kasner_a;
            Ok(FieldState::homogeneous(
                *grid,
                tau,
                a * tau + spec.kasner_b,
                0.0,
                spec.rho0,
                (0.5 * a * a - 2.0) * tau + spec.kasner_c,
                spec.rho0.exp() * a,
                0.0,
                false,
            )?)
        }
        SamplerMode::PseudoHomogeneous => Ok(FieldState::homogeneous(
            *grid,
            tau,
            spec.kasner_b,
            0.0,
            spec.rho0,
            spec.ell_mean,
            spec.rho0.exp() * spec.kasner_a,
            spec.target_b,
            true,
        )?),
        SamplerMode::PolarisedRandom => {
            let parts = random_parts(spec, grid, true)?;
            assemble(&parts, 1.0, spec, grid)
        }
        SamplerMode::B0Random | SamplerMode::GenericRandom => {
            let parts = random_parts(spec, grid, false)?;
            assemble(&parts, 1.0, spec, grid)
        }
        SamplerMode::NearAttractor => {
            let parts = random_parts(spec, grid, false)?;
            near_attractor(&parts, spec, grid)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallnessCondition {
    pub satisfied: bool,
    /// False when the condition cannot be evaluated (e.g. `H ≤ 0`).
    pub evaluable: bool,
    pub measured: f64,
}

impl SmallnessCondition {
    fn check(measured: f64, holds: bool) -> Self {
        Self {
            satisfied: holds,
            evaluable: measured.is_finite(),
            measured,
        }
    }

    fn unevaluable() -> Self {
        Self {
            satisfied: false,
            evaluable: false,
            measured: f64::NAN,
        }
    }
}

/// The eight initial smallness conditions evaluated at the state's τ as `s₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallnessReport {
    pub eps: f64,
    pub m_cap: f64,
    pub c1: f64,
    /// `|A| < 1`
    pub a_small: SmallnessCondition,
    /// `min ρ > 0`
    pub rho0_positive: SmallnessCondition,
    /// `|c| < ε`
    pub c_small: SmallnessCondition,
    /// `|d| < ε`
    pub d_small: SmallnessCondition,
    /// `|ΠE/H − 1| < 1`
    pub correction_small: SmallnessCondition,
    /// `½ε⁻¹ < e^{s₀} < 2ε⁻¹`
    pub start_time: SmallnessCondition,
    /// `e^{s₀}H + C₁ε^{1/2} < Mεe^{s₀}`
    pub energy_upper: SmallnessCondition,
    /// `1/M < e^{s₀}H − C₁ε^{1/2}`
    pub energy_lower: SmallnessCondition,
}

impl SmallnessReport {
    pub fn conditions(&self) -> [(&'static str, SmallnessCondition); 8] {
        [
            ("|A| < 1", self.a_small),
            ("rho_0 > 0", self.rho0_positive),
            ("|c| < eps", self.c_small),
            ("|d| < eps", self.d_small),
            ("|Pi E/H - 1| < 1", self.correction_small),
            ("eps^-1/2 < e^s0 < 2 eps^-1", self.start_time),
            ("e^s0 H + C1 eps^1/2 < M eps e^s0", self.energy_upper),
            ("1/M < e^s0 H - C1 eps^1/2", self.energy_lower),
        ]
    }

    pub fn all_satisfied(&self) -> bool {
        self.conditions().iter().all(|(_, c)| c.satisfied)
    }
}

pub fn check_smallness(state: &FieldState, eps: f64, m_cap: f64, c1: f64) -> SmallnessReport {
    let (a, _) = conserved_ab(state);
    let es = energy_suite(state);
    let es0 = state.tau.exp();
    let scaled_h = es0 * es.corrected_h;
    let root_eps = eps.sqrt();
    let (c_small, d_small) = if es.cd_defined {
        (
            SmallnessCondition::check(es.c_var.abs(), es.c_var.abs() < eps),
            SmallnessCondition::check(es.d_var.abs(), es.d_var.abs() < eps),
        )
    } else {
        (
            SmallnessCondition::unevaluable(),
            SmallnessCondition::unevaluable(),
        )
    };
    let correction_small = if es.corrected_h != 0.0 {
        let m = (es.volume * es.energy / es.corrected_h - 1.0).abs();
        SmallnessCondition::check(m, m < 1.0)
    } else {
        SmallnessCondition::unevaluable()
    };
    let upper = scaled_h + c1 * root_eps;
    let lower = scaled_h - c1 * root_eps;
    SmallnessReport {
        eps,
        m_cap,
        c1,
        a_small: SmallnessCondition::check(a.abs(), a.abs() < 1.0),
        rho0_positive: SmallnessCondition::check(state.rho_min(), state.rho_min() > 0.0),
        c_small,
        d_small,
        correction_small,
        start_time: SmallnessCondition::check(es0, 0.5 / eps < es0 && es0 < 2.0 / eps),
        energy_upper: SmallnessCondition::check(upper, upper < m_cap * eps * es0),
        energy_lower: SmallnessCondition::check(lower, 1.0 / m_cap < lower && m_cap > 1.0),
    }
}
