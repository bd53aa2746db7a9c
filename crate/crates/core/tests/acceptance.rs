//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use t2flow::analysis::{envelope_peaks, fit_log_slope, oscillation_period, refinement_order, Window};
use t2flow::batch::{run_batch, BatchClass, BatchConfig, BatchRow};
use t2flow::diagnostics::{conserved_ab, constraint_residual, energy_suite, record};
use t2flow::evolution::{evolve, rhs, EvolutionConfig};
use t2flow::fields::{FieldState, PeriodicGrid};
use t2flow::initial_data::{make_initial_data, Quadrature, SamplerMode, SamplerSpec};
use t2flow::reference_models::{cd_ode, ph_ode, HomogeneousData};
use t2flow::{C_STAR, D_STAR};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn filtered(interval: f64) -> EvolutionConfig {
    EvolutionConfig {
        output_interval: interval,
        filter_enabled: true,
        ..EvolutionConfig::default()
    }
}

fn kasner_regression() -> Outcome {
    let grid = PeriodicGrid::new(64).unwrap();
    let state = make_initial_data(&SamplerSpec::kasner(1.0, 0.0, 0.0, 0.0), &grid).unwrap();
    let ell0 = state.ell[0];
    let config = EvolutionConfig {
        output_interval: 0.25,
        ..EvolutionConfig::default()
    };
    let mut worst_v = 0.0f64;
    let mut worst_l = 0.0f64;
    let end = evolve(state, 5.0, &config, |s, _| {
        for j in 0..s.n_points() {
            worst_v = worst_v.max((s.v[j] - s.tau).abs());
            worst_l = worst_l.max((s.ell[j] - (ell0 - 1.5 * s.tau)).abs());
        }
    })
    .unwrap();
    let reached = (end.tau - 5.0).abs() < 1e-12;
    outcome(
        reached && worst_v < 1e-8 && worst_l < 1e-8,
        format!("max|V - tau| = {worst_v:.2e}, max|l - l0 + 3tau/2| = {worst_l:.2e}"),
    )
}

struct GenericRun {
    b_drift: f64,
    residual_growth: f64,
}

fn generic_runs() -> Vec<GenericRun> {
    let grid = PeriodicGrid::new(256).unwrap();
    (0..5u64)
        .map(|seed| {
            let mut spec = SamplerSpec::new(SamplerMode::GenericRandom, 100 + seed);
            spec.target_b = 0.05;
            let state = make_initial_data(&spec, &grid).unwrap();
            let (_, b0) = conserved_ab(&state);
            let r0 = constraint_residual(&state);
            let mut b_drift = 0.0f64;
            let mut r_max = r0;
            evolve(state, 10.0, &filtered(0.5), |_, rec| {
                b_drift = b_drift.max(((rec.b_const - b0) / b0).abs());
                r_max = r_max.max(rec.constraint_residual);
            })
            .unwrap();
            GenericRun {
                b_drift,
                residual_growth: r_max / r0,
            }
        })
        .collect()
}

fn a_convergence() -> Outcome {
    let mut spec = SamplerSpec::new(SamplerMode::GenericRandom, 7);
    spec.m_max = 4;
    spec.target_b = 0.05;
    spec.quadrature = Quadrature::Spectral;
    let drifts: Vec<f64> = [128, 256, 512]
        .iter()
        .map(|&n| {
            let grid = PeriodicGrid::new(n).unwrap();
            let state = make_initial_data(&spec, &grid).unwrap();
            let (a0, _) = conserved_ab(&state);
            let end = evolve(state, 4.0, &filtered(4.0), |_, _| {}).unwrap();
            (conserved_ab(&end).0 - a0).abs()
        })
        .collect();
    let order = refinement_order(&drifts).unwrap_or(f64::NAN);
    outcome(
        (order - 4.0).abs() <= 0.5,
        format!(
            "drifts {:.2e} / {:.2e} / {:.2e}, observed order {order:.3}",
            drifts[0], drifts[1], drifts[2]
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let init = HomogeneousData {
        tau0: 0.0,
        v: 0.3,
        v_tau: 0.8,
        q: -0.2,
        pi_q: 0.15,
        rho: 0.1,
        ell: -0.4,
        twist: true,
    };
    let grid = PeriodicGrid::new(16).unwrap();
    let state = FieldState::homogeneous(
        grid,
        init.tau0,
        init.v,
        init.q,
        init.rho,
        init.ell,
        init.rho.exp() * init.v_tau,
        init.pi_q,
        true,
    )
    .unwrap();
    let every = 0.5;
    let reference = ph_ode(&init, 8.0, 1e-12, every).unwrap();
    let mut worst = 0.0f64;
    let mut matched = 0;
    evolve(state, 8.0, &EvolutionConfig { output_interval: every, ..EvolutionConfig::default() }, |s, _| {
        if let Some(k) = reference.taus.iter().position(|t| (t - s.tau).abs() < 1e-9) {
            let row = &reference.values[k];
            matched += 1;
            for j in 0..s.n_points() {
                for (pde, ode) in [(s.v[j], row[0]), (s.q[j], row[2]), (s.rho[j], row[4]), (s.ell[j], row[5])] {
                    worst = worst.max((pde - ode).abs());
                }
                let v_tau = s.pi_v[j] * (-s.rho[j]).exp();
                worst = worst.max((v_tau - row[1]).abs());
            }
        }
    })
    .unwrap();
    outcome(
        matched == reference.len() && worst < 1e-6,
        format!("{matched} matched times, L-inf difference {worst:.2e}"),
    )
}

fn fixed_point() -> Outcome {
    let held = cd_ode(C_STAR, D_STAR, 50.0, 1e-12, 0.5).unwrap();
    let stray = held
        .values
        .iter()
        .map(|r| (r[0] - C_STAR).abs().max((r[1] - D_STAR).abs()))
        .fold(0.0, f64::max);
    let ends_at_50 = held.last().is_some_and(|(t, _)| (t - 50.0).abs() < 1e-9);

    let kicked = cd_ode(C_STAR + 1e-3, D_STAR, 50.0, 1e-12, 0.01).unwrap();
    let dc: Vec<f64> = kicked.column(0).iter().map(|c| c - C_STAR).collect();
    let window = Window::new(0.0, 50.0).unwrap();
    let period = oscillation_period(&kicked.taus, &dc, window).unwrap_or(f64::NAN);
    let abs_dc: Vec<f64> = dc.iter().map(|x| x.abs()).collect();
    let slope = envelope_peaks(&kicked.taus, &abs_dc, window)
        .and_then(|(t, p)| fit_log_slope(&t, &p, Window::new(t[0], t[t.len() - 1])?))
        .map_or(f64::NAN, |f| f.exponent);

    let period_ok = (period / 4.0244 - 1.0).abs() <= 0.02;
    let slope_ok = (slope / -0.25 - 1.0).abs() <= 0.05;
    outcome(
        ends_at_50 && stray < 1e-8 && period_ok && slope_ok,
        format!("fixed-point excursion {stray:.2e}, period {period:.4}, envelope slope {slope:.4}"),
    )
}

fn random_state(rng: &mut ChaCha8Rng, n: usize, homogeneous: bool) -> FieldState {
    let grid = PeriodicGrid::new(n).unwrap();
    let tau = rng.gen_range(-1.0..3.0);
    let mut field = |scale: f64, offset: f64| -> Vec<f64> {
        let base = offset + rng.gen_range(-scale..scale);
        if homogeneous {
            return vec![base; n];
        }
        let modes: Vec<(f64, f64)> = (0..4).map(|_| (rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))).collect();
        (0..n)
            .map(|j| {
                let x = std::f64::consts::TAU * j as f64 / n as f64;
                base + modes
                    .iter()
                    .enumerate()
                    .map(|(m, (a, b))| (a * ((m + 1) as f64 * x).cos() + b * ((m + 1) as f64 * x).sin()) / (m + 1) as f64)
                    .sum::<f64>()
            })
            .collect()
    };
    let v = field(0.5, 0.0);
    let q = field(0.5, 0.0);
    let rho = field(0.5, tau);
    let ell = field(0.5, -0.7);
    let pi_v = field(0.5, 0.0);
    let pi_q = field(0.5, 0.0);
    let twist = rng.gen_bool(0.5);
    FieldState::new(grid, tau, v, q, rho, ell, pi_v, pi_q, twist).unwrap()
}

fn avg(f: impl Iterator<Item = f64>, n: usize) -> f64 {
    f.sum::<f64>() / n as f64
}

fn identity_defects(s: &FieldState) -> [f64; 4] {
    let n = s.n_points();
    let t = s.tau;
    let v_tau: Vec<f64> = (0..n).map(|j| s.pi_v[j] * (-s.rho[j]).exp()).collect();
    let v_bar = avg(s.v.iter().copied(), n);
    let q_bar = avg(s.q.iter().copied(), n);
    let es = energy_suite(s);
    let rec = record(s, s.rho_min());

    let lhs = es.correction + avg((0..n).map(|j| 0.5 * (s.rho[j] - 2.0 * t).exp() * v_tau[j]), n);
    let rhs_l = 0.5 * (-2.0 * t).exp() * avg((0..n).map(|j| v_tau[j] * (s.v[j] - v_bar) * s.rho[j].exp()), n);
    let lambda = (lhs - rhs_l).abs() / (1.0 + rhs_l.abs());

    let (a, b) = conserved_ab(s);
    let pv = avg((0..n).map(|j| s.rho[j].exp() * v_tau[j]), n);
    let rhs_ab = a + b * q_bar + avg((0..n).map(|j| s.pi_q[j] * (s.q[j] - q_bar)), n);
    let ab = (pv - rhs_ab).abs() / (1.0 + pv.abs());

    let h = (rec.corrected_h - rec.volume * (rec.energy + rec.correction)).abs() / (1.0 + rec.corrected_h.abs());

    let d = rhs(s).unwrap();
    let scale = d.d_pi_q.iter().map(|x| x.abs()).sum::<f64>();
    let flux = d.d_pi_q.iter().sum::<f64>().abs() / (1.0 + scale);
    [lambda, ab, h, flux]
}

fn identity_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = [0.0f64; 5];
    for k in 0..100 {
        let s = random_state(&mut rng, 32 + 8 * (k % 5), false);
        for (w, d) in worst.iter_mut().zip(identity_defects(&s)) {
            *w = w.max(d);
        }
        let h = random_state(&mut rng, 16, true);
        let es = energy_suite(&h);
        worst[4] = worst[4].max(es.omega.abs() / (1.0 + es.y_tau.abs()));
    }
    outcome(
        worst.iter().all(|w| *w < 1e-12),
        format!(
            "Lambda {:.1e}, A/B {:.1e}, H {:.1e}, sum d_pi_q {:.1e}, homogeneous Omega {:.1e}",
            worst[0], worst[1], worst[2], worst[3], worst[4]
        ),
    )
}

fn batch(class: BatchClass) -> Vec<BatchRow> {
    let mut cfg = BatchConfig::new(class, 10);
    cfg.workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    run_batch(&cfg).unwrap()
}

/// Every row succeeded and passed the named checks.
fn rows_pass(rows: &[BatchRow], names: &[&str]) -> (bool, Vec<String>) {
    let mut ok = rows.len() >= 10;
    let mut notes = Vec::new();
    for row in rows {
        match &row.outcome {
            Ok(a) => {
                for c in a.checks.iter().filter(|c| names.contains(&c.name)) {
                    if !c.passed {
                        ok = false;
                        notes.push(format!("seed {}: {} = {:.4}", row.seed, c.name, c.measured));
                    }
                }
            }
            Err(e) => {
                ok = false;
                notes.push(format!("seed {}: {e}", row.seed));
            }
        }
    }
    (ok, notes)
}

fn range(rows: &[BatchRow], f: impl Fn(&t2flow::batch::RunAssessment) -> f64) -> String {
    let v: Vec<f64> = rows.iter().filter_map(|r| r.outcome.as_ref().ok()).map(f).collect();
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    format!("[{lo:.3}, {hi:.3}]")
}

const ATTRACTOR_CHECKS: [&str; 5] = [
    "e^tau H last-quarter variation < 10%",
    "e^l weighted mean -> 1/2 (10%)",
    "j_wmean -> 5/2 (10%)",
    "(c, d) decay slope <= -0.15",
    "C_inf from H, Pi, E, Y agree (10%)",
];

fn attractor_rates(b0: &[BatchRow]) -> Outcome {
    let (ok, notes) = rows_pass(b0, &ATTRACTOR_CHECKS);
    outcome(
        ok,
        format!(
            "{} seeds; e^tau H variation {}, e^l limit {}, j limit {}, (c,d) slope {}{}",
            b0.len(),
            range(b0, |a| a.h_variation),
            range(b0, |a| a.el_limit),
            range(b0, |a| a.j_limit),
            range(b0, |a| a.cd_slope),
            if notes.is_empty() { String::new() } else { format!("; {}", notes.join("; ")) }
        ),
    )
}

fn dichotomy(b0: &[BatchRow], generic: &[BatchRow]) -> Outcome {
    let (ok0, mut notes) = rows_pass(b0, &["|C_V| <= 0.05", "W slope < -0.1"]);
    let (ok1, notes1) = rows_pass(
        generic,
        &["C_V in [0.4, 0.6]", "E_V amplitude ratio > 0.5", "E_Q amplitude ratio > 0.5"],
    );
    notes.extend(notes1);
    outcome(
        ok0 && ok1,
        format!(
            "B=0: C_V {}, W slope {}; B!=0: C_V {}, E_V ratio {}, E_Q ratio {}{}",
            range(b0, |a| a.c_v),
            range(b0, |a| a.w_slope),
            range(generic, |a| a.c_v),
            range(generic, |a| a.ev_ratio),
            range(generic, |a| a.eq_ratio),
            if notes.is_empty() { String::new() } else { format!("; {}", notes.join("; ")) }
        ),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_t2flow"))
        .current_dir(dir)
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = run_cli(d, &["gen", "--mode", "generic", "--seed", "11", "--n", "128", "--target-b", "0.05", "--out", "init.t2f"])
        && run_cli(d, &["evolve", "--in", "init.t2f", "--tau-end", "3", "--every", "0.1", "--diag", "first.csv"])
        && run_cli(d, &["evolve", "--manifest", "first.csv.manifest.toml", "--diag", "second.csv"])
        && run_cli(d, &["evolve", "--manifest", "first.csv.manifest.toml", "--diag", "third.csv"]);
    if !ok {
        return outcome(false, "CLI invocation failed".into());
    }
    let read = |name: &str| std::fs::read(d.join(name)).unwrap();
    let (a, b, c) = (read("first.csv"), read("second.csv"), read("third.csv"));
    outcome(
        a == b && b == c && a.len() > 1000,
        format!("{} bytes, replays identical: {}", a.len(), a == b && b == c),
    )
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(u32, &str, Outcome, f64)> = Vec::new();
    let mut timed = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        println!(
            "criterion {id:>2} {:<30} {}  ({secs:.1} s)  {}",
            name,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o, secs));
    };

    timed(1, "Kasner regression", &mut kasner_regression);
    let mut runs = Vec::new();
    timed(2, "B conservation", &mut || {
        runs = generic_runs();
        let worst = runs.iter().map(|r| r.b_drift).fold(0.0, f64::max);
        outcome(worst < 1e-10, format!("5 runs, max relative drift {worst:.2e}"))
    });
    timed(3, "A convergence order", &mut a_convergence);
    timed(4, "constraint residual growth", &mut || {
        let worst = runs.iter().map(|r| r.residual_growth).fold(0.0, f64::max);
        outcome(worst < 10.0, format!("max growth factor {worst:.3}"))
    });
    timed(5, "homogeneous oracle", &mut oracle_equivalence);
    timed(6, "(c, d) fixed point", &mut fixed_point);
    timed(7, "exact identities", &mut identity_suite);
    let mut b0 = Vec::new();
    timed(8, "attractor rates (B = 0)", &mut || {
        b0 = batch(BatchClass::B0);
        attractor_rates(&b0)
    });
    timed(9, "C_V dichotomy", &mut || dichotomy(&b0, &batch(BatchClass::Generic)));
    timed(10, "reproducibility", &mut reproducibility);

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.passed).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} passed in {:.0} s",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
