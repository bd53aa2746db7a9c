//! Seeded ensembles of near-attractor runs and their late-time assessment.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use crate::analysis::{
    amplitude_ratio, estimate_limit, fit_cv, fit_log_slope, oscillation_period,
    profile_cauchy_rate, spiral_norm, volume_profile, AnalysisError, Window,
};
use crate::diagnostics::DiagnosticsRecord;
use crate::evolution::{evolve, EvolutionConfig};
use crate::fields::PeriodicGrid;
use crate::initial_data::{rescale_to_attractor, SamplerMode, SamplerSpec};

/// Environment variable capping batch parallelism.
pub const THREADS_ENV: &str = "T2FLOW_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchClass {
    Polarised,
    B0,
    Generic,
}

impl BatchClass {
    pub fn name(&self) -> &'static str {
        match self {
            BatchClass::Polarised => "polarised",
            BatchClass::B0 => "b0",
            BatchClass::Generic => "generic",
        }
    }

    pub fn b_vanishes(&self) -> bool {
        !matches!(self, BatchClass::Generic)
    }
}

impl FromStr for BatchClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "polarised" => Ok(BatchClass::Polarised),
            "b0" => Ok(BatchClass::B0),
            "generic" => Ok(BatchClass::Generic),
            other => Err(format!("unknown class `{other}` (polarised | b0 | generic)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchConfig {
    pub class: BatchClass,
    pub count: usize,
    pub workers: usize,
    pub seed: u64,
    pub n: usize,
    pub tau_end: f64,
    /// `B` for the generic class; ignored otherwise.
    pub target_b: f64,
    pub rho0: f64,
    pub attractor_c: f64,
    pub evolution: EvolutionConfig,
}

impl BatchConfig {
    pub fn new(class: BatchClass, count: usize) -> Self {
        Self {
            class,
            count,
            workers: 1,
            seed: 0,
            n: 256,
            tau_end: 12.0,
            target_b: 0.1,
            rho0: 0.9,
            attractor_c: 0.05,
            evolution: EvolutionConfig {
                output_interval: 0.05,
                filter_enabled: true,
                ..EvolutionConfig::default()
            },
        }
    }

    /// Sampler recipe for run `index` (seed = base seed + index).
    pub fn spec(&self, index: usize) -> SamplerSpec {
        let mut spec = SamplerSpec::new(SamplerMode::NearAttractor, self.seed + index as u64);
        spec.rho0 = self.rho0;
        spec.attractor_c = self.attractor_c;
        spec.target_b = if self.class.b_vanishes() { 0.0 } else { self.target_b };
        spec
    }
}

/// One named pass/fail check with the measured value.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub passed: bool,
}

/// Late-time fits of one run against the expected asymptotics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunAssessment {
    pub c_v: f64,
    /// `C∞` from the limit of `e^τH`.
    pub c_inf: f64,
    /// `C∞` from the limits of `Πe^{−τ/2}`, `Ee^{3τ/2}`, `Ye^{−5τ/2}`.
    pub c_inf_pi: f64,
    pub c_inf_e: f64,
    pub c_inf_y: f64,
    /// `(max − min)/mean` of `e^τH` over the last quarter.
    pub h_variation: f64,
    pub el_limit: f64,
    pub j_limit: f64,
    /// Log-slope of the `(c, d)` spiral norm.
    pub cd_slope: f64,
    pub w_slope: f64,
    pub ev_ratio: f64,
    pub eq_ratio: f64,
    /// Reported only; `None` when too few oscillations were seen.
    pub cd_period: Option<f64>,
    pub ev_period: Option<f64>,
    pub s_period: Option<f64>,
    /// Log-slope of successive `Π⁻¹e^ρ` profile differences.
    pub rho_profile_rate: f64,
    pub checks: Vec<Check>,
}

impl RunAssessment {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn column(records: &[DiagnosticsRecord], f: impl Fn(&DiagnosticsRecord) -> f64) -> Vec<f64> {
    records.iter().map(f).collect()
}

fn check(name: &'static str, measured: f64, passed: bool) -> Check {
    Check {
        name,
        measured,
        passed: passed && measured.is_finite(),
    }
}

/// Fits the late-time behaviour of one run and evaluates the checks for
/// its class: the averaged-limit and decay checks plus `C_V ≈ 0` and a
/// decaying `W` when `B = 0`, `C_V ≈ ½` with undamped `E_V, E_Q`
/// oscillations otherwise.
pub fn assess(
    records: &[DiagnosticsRecord],
    profiles: &[(f64, Vec<f64>)],
    b_vanishes: bool,
) -> Result<RunAssessment, AnalysisError> {
    let taus = column(records, |r| r.tau);
    let late = Window::late_half(&taus)?;
    let whole = Window::fraction(&taus, 0.0, 1.0)?;
    let last_quarter = Window::fraction(&taus, 0.75, 1.0)?;
    let r10 = 10f64.sqrt();

    let scaled_h = column(records, |r| r.tau.exp() * r.corrected_h);
    let in_last_quarter: Vec<f64> = taus
        .iter()
        .zip(&scaled_h)
        .filter(|(t, _)| last_quarter.contains(**t))
        .map(|(_, h)| *h)
        .collect();
    let (hmin, hmax) = in_last_quarter
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
    let hmean = in_last_quarter.iter().sum::<f64>() / in_last_quarter.len().max(1) as f64;
    let h_variation = (hmax - hmin) / hmean;

    let h_lim = estimate_limit(&taus, &scaled_h, late)?.limit;
    let pi_lim = estimate_limit(&taus, &column(records, |r| r.volume * (-0.5 * r.tau).exp()), late)?.limit;
    let e_lim = estimate_limit(&taus, &column(records, |r| r.energy * (1.5 * r.tau).exp()), late)?.limit;
    let y_lim = estimate_limit(&taus, &column(records, |r| r.twist_y * (-2.5 * r.tau).exp()), late)?.limit;
    let c_inf = h_lim.sqrt();
    let c_inf_pi = pi_lim * r10 / 2.0;
    let c_inf_e = e_lim * 2.0 / r10;
    let c_inf_y = y_lim * r10;
    let el_limit = estimate_limit(&taus, &column(records, |r| r.el_wmean), late)?.limit;
    let j_limit = estimate_limit(&taus, &column(records, |r| r.j_wmean), late)?.limit;

    let norms = column(records, |r| spiral_norm(r.c_var, r.d_var));
    let cd_slope = fit_log_slope(&taus, &norms, late)?.exponent;
    let c_v = fit_cv(&taus, &column(records, |r| r.v_mean), late)?.exponent;
    let w = column(records, |r| r.w_diag);
    let (wt, wv): (Vec<f64>, Vec<f64>) = taus
        .iter()
        .zip(&w)
        .filter(|(_, x)| x.is_finite())
        .map(|(a, b)| (*a, *b))
        .unzip();
    let w_slope = fit_cv(&wt, &wv, late)?.exponent;
    let ev = column(records, |r| r.ev_diag);
    let eq = column(records, |r| r.eq_diag);
    let ev_ratio = amplitude_ratio(&taus, &ev, whole).unwrap_or(f64::NAN);
    let eq_ratio = amplitude_ratio(&taus, &eq, whole).unwrap_or(f64::NAN);
    let cd_period = oscillation_period(&taus, &column(records, |r| r.c_var), whole).ok();
    let ev_period = oscillation_period(&taus, &ev, whole).ok();
    let s_period = oscillation_period(&taus, &column(records, |r| r.s_diag), whole).ok();

    let rho_profile_rate = if profiles.len() >= 3 {
        let (pt, pp): (Vec<f64>, Vec<Vec<f64>>) = profiles.iter().cloned().unzip();
        profile_cauchy_rate(&pt, &pp)?.1.exponent
    } else {
        f64::NAN
    };

    let within = |x: f64, target: f64| (x / target - 1.0).abs() < 0.1;
    let c_all = [c_inf, c_inf_pi, c_inf_e, c_inf_y];
    let c_spread = c_all.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        / c_all.iter().cloned().fold(f64::INFINITY, f64::min)
        - 1.0;
    let mut checks = Vec::new();
    if b_vanishes {
        checks.extend([
            check("e^tau H last-quarter variation < 10%", h_variation, h_variation < 0.1),
            check("e^l weighted mean -> 1/2 (10%)", el_limit, within(el_limit, 0.5)),
            check("j_wmean -> 5/2 (10%)", j_limit, within(j_limit, 2.5)),
            check("(c, d) decay slope <= -0.15", cd_slope, cd_slope <= -0.15),
            check("C_inf from H, Pi, E, Y agree (10%)", c_spread, c_spread < 0.1),
            check("|C_V| <= 0.05", c_v, c_v.abs() <= 0.05),
            check("W slope < -0.1", w_slope, w_slope < -0.1),
        ]);
    } else {
        checks.extend([
            check("C_V in [0.4, 0.6]", c_v, (0.4..=0.6).contains(&c_v)),
            check("E_V amplitude ratio > 0.5", ev_ratio, ev_ratio > 0.5),
            check("E_Q amplitude ratio > 0.5", eq_ratio, eq_ratio > 0.5),
        ]);
    }
    Ok(RunAssessment {
        c_v,
        c_inf,
        c_inf_pi,
        c_inf_e,
        c_inf_y,
        h_variation,
        el_limit,
        j_limit,
        cd_slope,
        w_slope,
        ev_ratio,
        eq_ratio,
        cd_period,
        ev_period,
        s_period,
        rho_profile_rate,
        checks,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchRow {
    pub index: usize,
    pub seed: u64,
    pub outcome: Result<RunAssessment, String>,
}

impl BatchRow {
    pub fn passed(&self) -> bool {
        matches!(&self.outcome, Ok(a) if a.passed())
    }
}

/// Number of `Π⁻¹e^ρ` profiles kept per run, evenly spaced over the late half.
const PROFILE_SAMPLES: usize = 12;

/// Generates, evolves and assesses run `index`. Failures become the row's error.
pub fn run_one(cfg: &BatchConfig, index: usize) -> BatchRow {
    let spec = cfg.spec(index);
    let outcome = (|| -> Result<RunAssessment, String> {
        let grid = PeriodicGrid::new(cfg.n).map_err(|e| e.to_string())?;
        let polarised = cfg.class == BatchClass::Polarised;
        let state = rescale_to_attractor(&spec, &grid, polarised).map_err(|e| e.to_string())?;
        let tau0 = state.tau;
        let profile_start = tau0 + 0.5 * (cfg.tau_end - tau0);
        let profile_step = (cfg.tau_end - profile_start) / PROFILE_SAMPLES as f64;
        let mut next_profile = profile_start;
        let mut records = Vec::new();
        let mut profiles = Vec::new();
        evolve(state, cfg.tau_end, &cfg.evolution, |s, r| {
            records.push(*r);
            if s.tau >= next_profile - 1e-9 {
                profiles.push((s.tau, volume_profile(s)));
                next_profile += profile_step;
            }
        })
        .map_err(|e| e.to_string())?;
        assess(&records, &profiles, cfg.class.b_vanishes()).map_err(|e| e.to_string())
    })();
    BatchRow {
        index,
        seed: spec.seed,
        outcome,
    }
}

/// Effective worker count: the request, capped by `T2FLOW_THREADS` when set.
pub fn worker_count(requested: usize) -> usize {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&c| c > 0);
    let n = requested.max(1);
    cap.map_or(n, |c| n.min(c))
}

/// Runs `count` independent seeds in parallel; rows come back in index order.
pub fn run_batch(cfg: &BatchConfig) -> Result<Vec<BatchRow>, String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(cfg.workers))
        .build()
        .map_err(|e| e.to_string())?;
    Ok(pool.install(|| (0..cfg.count).into_par_iter().map(|i| run_one(cfg, i)).collect()))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |p| format!("{p:.3}"))
}

/// Plain-text summary: one row per run, then a pass count.
pub fn summary_table(class: BatchClass, rows: &[BatchRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>5} {:>8} {:>8} {:>8} {:>9} {:>8} {:>8} {:>8} {:>8} {:>6}  status",
        "run", "seed", "C_V", "C_inf", "cd_slope", "W_slope", "EV_amp", "EQ_amp", "period", "pass"
    );
    for row in rows {
        match &row.outcome {
            Ok(a) => {
                let failed: Vec<&str> = a.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
                let _ = writeln!(
                    out,
                    "{:>5} {:>8} {:>8.4} {:>8.4} {:>9.4} {:>8.4} {:>8.3} {:>8.3} {:>8} {:>6}  {}",
                    row.index,
                    row.seed,
                    a.c_v,
                    a.c_inf,
                    a.cd_slope,
                    a.w_slope,
                    a.ev_ratio,
                    a.eq_ratio,
                    fmt_opt(a.cd_period),
                    if a.passed() { "yes" } else { "no" },
                    if failed.is_empty() { "ok".to_string() } else { failed.join("; ") }
                );
            }
            Err(e) => {
                let _ = writeln!(out, "{:>5} {:>8} {:>74}  failed: {e}", row.index, row.seed, "");
            }
        }
    }
    let passed = rows.iter().filter(|r| r.passed()).count();
    let _ = writeln!(out, "class {}: {passed}/{} runs passed", class.name(), rows.len());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_parsing() {
        assert_eq!("b0".parse::<BatchClass>().unwrap(), BatchClass::B0);
        assert!("x".parse::<BatchClass>().is_err());
        assert!(!BatchClass::Generic.b_vanishes());
    }

    #[test]
    fn seeds_follow_index() {
        let cfg = BatchConfig {
            seed: 40,
            ..BatchConfig::new(BatchClass::Generic, 3)
        };
        assert_eq!(cfg.spec(2).seed, 42);
        assert_eq!(cfg.spec(2).target_b, 0.1);
        assert_eq!(BatchConfig::new(BatchClass::B0, 1).spec(0).target_b, 0.0);
    }

    #[test]
    fn worker_cap() {
        assert!(worker_count(0) >= 1);
    }

    #[test]
    fn failed_runs_are_recorded() {
        let cfg = BatchConfig {
            n: 30,
            ..BatchConfig::new(BatchClass::B0, 2)
        };
        let rows = run_batch(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.outcome.is_err()));
        let table = summary_table(cfg.class, &rows);
        assert!(table.contains("0/2 runs passed"));
    }
}
