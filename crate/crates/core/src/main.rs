use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use t2flow::analysis::{
    amplitude_ratio, estimate_limit, fit_cv, fit_log_slope, oscillation_period, convergence_order,
    RateFit, Window,
};
use t2flow::batch::{run_batch, summary_table, assess, BatchClass, BatchConfig};
use t2flow::diagnostics::{conserved_ab, constraint_residual};
use t2flow::evolution::{evolve, EvolutionConfig, EvolutionError};
use t2flow::fields::{FieldState, PeriodicGrid};
use t2flow::initial_data::{make_initial_data, InitialDataError, Quadrature, SamplerMode, SamplerSpec};
use t2flow::io::{
    format_value, read_checkpoint, read_diagnostics, write_checkpoint, ConfigFile, DiagnosticsWriter,
    IoError, RunManifest,
};
use t2flow::reference_models::{cd_linearization, cd_ode, eigenvalues_2x2};

const EXIT_USAGE: u8 = 2;
const EXIT_CONSTRAINT: u8 = 3;
const EXIT_EVOLUTION: u8 = 4;
const EXIT_ANALYSIS: u8 = 5;

#[derive(Parser)]
#[command(name = "t2flow", version, about = "Expanding T2-symmetric vacuum flows: data, evolution, fits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate constrained initial data and write a checkpoint plus manifest.
    Gen(GenArgs),
    /// Evolve a checkpoint (or replay a manifest) and write the diagnostics CSV.
    Evolve(EvolveArgs),
    /// Fit rates and limits from a diagnostics CSV.
    Fit(FitArgs),
    /// Integrate the averaged (c, d) system and write its trajectory.
    Oderef(OderefArgs),
    /// Self-convergence test at N, 2N, 4N.
    Converge(ConvergeArgs),
    /// Run seeded near-attractor ensembles and summarise the fits.
    Batch(BatchArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Key-value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// kasner | polarised | b0 | generic | ph | near_attractor
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    mmax: Option<usize>,
    #[arg(long)]
    amp: Option<f64>,
    #[arg(long = "target-b", allow_hyphen_values = true)]
    target_b: Option<f64>,
    #[arg(long = "ell-mean", allow_hyphen_values = true)]
    ell_mean: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    rho0: Option<f64>,
    #[arg(long = "rho-amp")]
    rho_amp: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    tau0: Option<f64>,
    #[arg(long = "kasner-a", allow_hyphen_values = true)]
    kasner_a: Option<f64>,
    #[arg(long = "kasner-b", allow_hyphen_values = true)]
    kasner_b: Option<f64>,
    #[arg(long = "kasner-c", allow_hyphen_values = true)]
    kasner_c: Option<f64>,
    #[arg(long = "attractor-c", allow_hyphen_values = true)]
    attractor_c: Option<f64>,
    /// Integrate the constraint spectrally instead of by the trapezoid rule.
    #[arg(long)]
    spectral: bool,
    /// Checkpoint path; the manifest goes to <out>.manifest.toml.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvolveArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input checkpoint.
    #[arg(long = "in", conflicts_with = "manifest")]
    input: Option<PathBuf>,
    /// Replay a run manifest instead of reading a checkpoint.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long = "tau-end")]
    tau_end: Option<f64>,
    #[arg(long)]
    cfl: Option<f64>,
    /// τ spacing of diagnostic rows.
    #[arg(long)]
    every: Option<f64>,
    /// Diagnostics CSV path (standard output when omitted).
    #[arg(long)]
    diag: Option<PathBuf>,
    /// τ spacing of periodic checkpoints.
    #[arg(long = "ckpt-every")]
    ckpt_every: Option<f64>,
    /// Path prefix for periodic and final checkpoints.
    #[arg(long = "ckpt-prefix")]
    ckpt_prefix: Option<PathBuf>,
    /// Apply the 2/3-rule spectral filter after every step.
    #[arg(long)]
    filter: bool,
    #[arg(long = "max-steps")]
    max_steps: Option<u64>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    diag: PathBuf,
    /// Column to fit; without it a full late-time report is printed.
    #[arg(long)]
    column: Option<String>,
    /// slope | limit | cv | period | ratio
    #[arg(long, default_value = "limit")]
    kind: String,
    /// Fit window start (default: middle of the run).
    #[arg(long, allow_hyphen_values = true)]
    from: Option<f64>,
    /// Fit window end (default: 2% before the last row).
    #[arg(long, allow_hyphen_values = true)]
    to: Option<f64>,
}

#[derive(Args)]
struct OderefArgs {
    /// Initial c̄ (absolute; the fixed point is 2/√10).
    #[arg(long, allow_hyphen_values = true, default_value_t = t2flow::C_STAR)]
    c0: f64,
    /// Initial d̄ (absolute; the fixed point is 1/√10).
    #[arg(long, allow_hyphen_values = true, default_value_t = t2flow::D_STAR)]
    d0: f64,
    #[arg(long = "tau-end", default_value_t = 50.0)]
    tau_end: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 0.1)]
    every: f64,
    /// Trajectory CSV path (standard output when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Coarsest grid size.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    mmax: Option<usize>,
    #[arg(long)]
    amp: Option<f64>,
    #[arg(long = "target-b", allow_hyphen_values = true)]
    target_b: Option<f64>,
    #[arg(long = "tau-end")]
    tau_end: Option<f64>,
    #[arg(long)]
    cfl: Option<f64>,
    /// V | Q | rho | l | pi_v | pi_q
    #[arg(long, default_value = "V")]
    field: String,
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// polarised | b0 | generic
    #[arg(long)]
    class: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "tau-end")]
    tau_end: Option<f64>,
    #[arg(long = "target-b", allow_hyphen_values = true)]
    target_b: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    rho0: Option<f64>,
    /// Also write the summary table here.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error carrying its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(m: impl ToString) -> Self {
        Self {
            code: EXIT_USAGE,
            message: m.to_string(),
        }
    }

    fn analysis(m: impl ToString) -> Self {
        Self {
            code: EXIT_ANALYSIS,
            message: m.to_string(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::usage(e)
    }
}

impl From<InitialDataError> for Failure {
    fn from(e: InitialDataError) -> Self {
        let code = match e {
            InitialDataError::Usage(_) | InitialDataError::Fields(_) => EXIT_USAGE,
            _ => EXIT_CONSTRAINT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<EvolutionError> for Failure {
    fn from(e: EvolutionError) -> Self {
        let code = match e {
            EvolutionError::BadConfig(_) | EvolutionError::BadEndTime { .. } => EXIT_USAGE,
            _ => EXIT_EVOLUTION,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::usage(e)
    }
}

type Outcome = Result<(), Failure>;

fn load_config(path: &Option<PathBuf>) -> Result<ConfigFile, Failure> {
    Ok(match path {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    })
}

/// Flag value, else config value, else `None`.
macro_rules! pick {
    ($flag:expr, $cfg:expr, $getter:ident, $key:expr) => {
        match $flag.clone() {
            Some(v) => Some(v),
            None => $cfg.$getter($key)?.map(Into::into),
        }
    };
}

fn pick_usize(flag: Option<usize>, cfg: &ConfigFile, key: &str) -> Result<Option<usize>, Failure> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => Ok(cfg.u64(key)?.map(|v| v as usize)),
    }
}

fn open_sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            Failure::usage(format!("{}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn manifest_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".manifest.toml");
    PathBuf::from(s)
}

fn cmd_gen(a: GenArgs) -> Outcome {
    let cfg = load_config(&a.config)?;
    let mode: SamplerMode = pick!(a.mode, cfg, str, "mode")
        .ok_or_else(|| Failure::usage("--mode is required"))?
        .parse()?;
    let seed = pick!(a.seed, cfg, u64, "seed").unwrap_or(0);
    let n = pick_usize(a.n, &cfg, "n")?.unwrap_or(256);
    let mut spec = SamplerSpec::new(mode, seed);
    if let Some(v) = pick_usize(a.mmax, &cfg, "mmax")? {
        spec.m_max = v;
    }
    let floats: [(Option<f64>, &str, &mut f64); 10] = [
        (a.amp, "amp", &mut spec.amplitude),
        (a.target_b, "target-b", &mut spec.target_b),
        (a.ell_mean, "ell-mean", &mut spec.ell_mean),
        (a.rho0, "rho0", &mut spec.rho0),
        (a.rho_amp, "rho-amp", &mut spec.rho_amplitude),
        (a.tau0, "tau0", &mut spec.tau0),
        (a.kasner_a, "kasner-a", &mut spec.kasner_a),
        (a.kasner_b, "kasner-b", &mut spec.kasner_b),
        (a.kasner_c, "kasner-c", &mut spec.kasner_c),
        (a.attractor_c, "attractor-c", &mut spec.attractor_c),
    ];
    for (flag, key, slot) in floats {
        if let Some(v) = pick!(flag, cfg, f64, key) {
            *slot = v;
        }
    }
    if a.spectral || cfg.bool("spectral")?.unwrap_or(false) {
        spec.quadrature = Quadrature::Spectral;
    }
    let grid = PeriodicGrid::new(n).map_err(Failure::usage)?;
    let state = make_initial_data(&spec, &grid)?;
    write_checkpoint(&a.out, &state)?;
    let manifest = RunManifest::new(&spec, &state);
    manifest.write(&manifest_path(&a.out))?;
    let (_, b) = conserved_ab(&state);
    println!("B = {}", format_value(b));
    println!("constraint_residual = {}", format_value(constraint_residual(&state)));
    Ok(())
}

struct EvolveRun {
    state: FieldState,
    tau_end: f64,
    config: EvolutionConfig,
    manifest: Option<RunManifest>,
}

fn evolve_inputs(a: &EvolveArgs, cfg: &ConfigFile) -> Result<EvolveRun, Failure> {
    let (state, base, mut manifest) = if let Some(path) = &a.manifest {
        let m = RunManifest::read(path)?;
        let grid = PeriodicGrid::new(m.grid_n).map_err(Failure::usage)?;
        let state = make_initial_data(&m.spec, &grid)?;
        m.verify_initial(&state)?;
        let base = m.evolution.unwrap_or_default();
        (state, base, Some(m))
    } else {
        let path = a
            .input
            .clone()
            .or(cfg.str("in")?.map(PathBuf::from))
            .ok_or_else(|| Failure::usage("one of --in or --manifest is required"))?;
        let state = read_checkpoint(&path)?;
        // A generation manifest next to the checkpoint lets the run be replayed.
        let m = RunManifest::read(&manifest_path(&path))
            .ok()
            .filter(|m| m.verify_initial(&state).is_ok());
        (state, EvolutionConfig::default(), m)
    };
    let config = EvolutionConfig {
        cfl_lambda: pick!(a.cfl, cfg, f64, "cfl").unwrap_or(base.cfl_lambda),
        output_interval: pick!(a.every, cfg, f64, "every").unwrap_or(base.output_interval),
        max_steps: pick!(a.max_steps, cfg, u64, "max-steps").unwrap_or(base.max_steps),
        filter_enabled: a.filter || cfg.bool("filter")?.unwrap_or(base.filter_enabled),
    };
    let tau_end = pick!(a.tau_end, cfg, f64, "tau-end")
        .or(manifest.as_ref().and_then(|m| m.tau_end))
        .ok_or_else(|| Failure::usage("--tau-end is required"))?;
    if let Some(m) = manifest.as_mut() {
        m.tau_end = Some(tau_end);
        m.evolution = Some(config);
    }
    Ok(EvolveRun {
        state,
        tau_end,
        config,
        manifest,
    })
}

fn cmd_evolve(a: EvolveArgs) -> Outcome {
    let cfg = load_config(&a.config)?;
    let run = evolve_inputs(&a, &cfg)?;
    let diag = a.diag.clone().or(cfg.str("diag")?.map(PathBuf::from));
    let ckpt_every = pick!(a.ckpt_every, cfg, f64, "ckpt-every");
    if let Some(every) = ckpt_every {
        if !(every > 0.0) {
            return Err(Failure::usage("--ckpt-every must be positive"));
        }
    }
    let prefix = a
        .ckpt_prefix
        .clone()
        .or(cfg.str("ckpt-prefix")?.map(PathBuf::from))
        .or_else(|| diag.as_ref().map(|d| d.with_extension("")))
        .unwrap_or_else(|| PathBuf::from("t2flow"));
    if let (Some(m), Some(d)) = (&run.manifest, &diag) {
        m.write(&manifest_path(d))?;
    }

    let mut writer = DiagnosticsWriter::new(open_sink(&diag)?)?;
    let tau0 = run.state.tau;
    let mut last_tau = tau0;
    let mut next_ckpt = ckpt_every.map(|e| tau0 + e);
    let mut ckpt_index = 0usize;
    let mut side_error: Option<IoError> = None;
    let result = evolve(run.state, run.tau_end, &run.config, |s, r| {
        last_tau = r.tau;
        if side_error.is_some() {
            return;
        }
        if let Err(e) = writer.write(r) {
            side_error = Some(e);
            return;
        }
        if let (Some(next), Some(every)) = (next_ckpt, ckpt_every) {
            if s.tau >= next - 1e-9 * every {
                ckpt_index += 1;
                let path = PathBuf::from(format!("{}_{ckpt_index:04}.t2f", prefix.display()));
                if let Err(e) = write_checkpoint(&path, s) {
                    side_error = Some(e);
                }
                next_ckpt = Some(next + every);
            }
        }
    });
    match result {
        Ok(final_state) => {
            writer.finish()?.flush()?;
            if let Some(e) = side_error {
                return Err(e.into());
            }
            write_checkpoint(&PathBuf::from(format!("{}_final.t2f", prefix.display())), &final_state)?;
            Ok(())
        }
        Err(e) => {
            let tau = match &e {
                EvolutionError::NonFinite { tau, .. }
                | EvolutionError::Range { tau }
                | EvolutionError::MaxSteps { tau, .. } => *tau,
                _ => last_tau,
            };
            writer.abort(tau, &e.to_string())?.flush()?;
            Err(e.into())
        }
    }
}

fn print_fit(label: &str, f: &RateFit) {
    println!("[{label}]");
    println!("exponent = {}", format_value(f.exponent));
    println!("amplitude = {}", format_value(f.amplitude));
    println!("limit = {}", format_value(f.limit));
    println!("window = [{}, {}]", format_value(f.window.0), format_value(f.window.1));
    println!("residual_rms = {}", format_value(f.residual_rms));
    println!("flagged = {}", f.flagged);
}

fn cmd_fit(a: FitArgs) -> Outcome {
    let table = read_diagnostics(&a.diag)?;
    let taus = table
        .column("tau")
        .ok_or_else(|| Failure::analysis("CSV has no tau column"))?;
    let default = Window::late_half(&taus).map_err(Failure::analysis)?;
    let window = Window::new(a.from.unwrap_or(default.lo), a.to.unwrap_or(default.hi))
        .map_err(Failure::analysis)?;
    if let Some(name) = &a.column {
        let values = table
            .column(name)
            .ok_or_else(|| Failure::usage(format!("no column `{name}`")))?;
        match a.kind.as_str() {
            "slope" => print_fit(name, &fit_log_slope(&taus, &values, window).map_err(Failure::analysis)?),
            "limit" => print_fit(name, &estimate_limit(&taus, &values, window).map_err(Failure::analysis)?),
            "cv" => print_fit(name, &fit_cv(&taus, &values, window).map_err(Failure::analysis)?),
            "period" => {
                let p = oscillation_period(&taus, &values, window).map_err(Failure::analysis)?;
                println!("[{name}]\nperiod = {}", format_value(p));
            }
            "ratio" => {
                let r = amplitude_ratio(&taus, &values, window).map_err(Failure::analysis)?;
                println!("[{name}]\namplitude_ratio = {}", format_value(r));
            }
            other => return Err(Failure::usage(format!("unknown fit kind `{other}`"))),
        }
        return Ok(());
    }
    let records = table.records()?;
    let b = records.first().map_or(0.0, |r| r.b_const);
    let report = assess(&records, &[], b.abs() < 1e-12).map_err(Failure::analysis)?;
    println!("[report]");
    println!("class = {}", if b.abs() < 1e-12 { "B = 0" } else { "B != 0" });
    for (k, v) in [
        ("C_V", report.c_v),
        ("C_inf_H", report.c_inf),
        ("C_inf_Pi", report.c_inf_pi),
        ("C_inf_E", report.c_inf_e),
        ("C_inf_Y", report.c_inf_y),
        ("eH_last_quarter_variation", report.h_variation),
        ("el_wmean_limit", report.el_limit),
        ("j_wmean_limit", report.j_limit),
        ("cd_decay_slope", report.cd_slope),
        ("W_slope", report.w_slope),
        ("EV_amplitude_ratio", report.ev_ratio),
        ("EQ_amplitude_ratio", report.eq_ratio),
    ] {
        println!("{k} = {}", format_value(v));
    }
    for (k, v) in [
        ("cd_period", report.cd_period),
        ("EV_period", report.ev_period),
        ("S_period", report.s_period),
    ] {
        println!("{k} = {}", v.map_or("none".to_string(), format_value));
    }
    for c in &report.checks {
        println!("check \"{}\" = {} ({})", c.name, if c.passed { "pass" } else { "fail" }, format_value(c.measured));
    }
    Ok(())
}

fn cmd_oderef(a: OderefArgs) -> Outcome {
    let traj = cd_ode(a.c0, a.d0, a.tau_end, a.tol, a.every).map_err(Failure::analysis)?;
    let [(re, im), _] = eigenvalues_2x2(cd_linearization());
    eprintln!("linearization eigenvalues: {re} +/- {}i", im.abs());
    let mut out = csv::Writer::from_writer(open_sink(&a.out)?);
    out.write_record(["tau", "c", "d"]).map_err(Failure::usage)?;
    for (t, row) in traj.taus.iter().zip(&traj.values) {
        out.write_record([format_value(*t), format_value(row[0]), format_value(row[1])])
            .map_err(Failure::usage)?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_converge(a: ConvergeArgs) -> Outcome {
    let cfg = load_config(&a.config)?;
    let mode: SamplerMode = pick!(a.mode, cfg, str, "mode")
        .unwrap_or_else(|| "generic".to_string())
        .parse()?;
    let mut spec = SamplerSpec::new(mode, pick!(a.seed, cfg, u64, "seed").unwrap_or(0));
    spec.quadrature = Quadrature::Spectral;
    if let Some(v) = pick_usize(a.mmax, &cfg, "mmax")? {
        spec.m_max = v;
    } else {
        spec.m_max = 4;
    }
    if let Some(v) = pick!(a.amp, cfg, f64, "amp") {
        spec.amplitude = v;
    }
    if let Some(v) = pick!(a.target_b, cfg, f64, "target-b") {
        spec.target_b = v;
    }
    let n = pick_usize(a.n, &cfg, "n")?.unwrap_or(64);
    let tau_end = pick!(a.tau_end, cfg, f64, "tau-end").unwrap_or(spec.tau0 + 5.0);
    let config = EvolutionConfig {
        cfl_lambda: pick!(a.cfl, cfg, f64, "cfl").unwrap_or(0.5),
        output_interval: tau_end - spec.tau0,
        ..EvolutionConfig::default()
    };
    let field = match a.field.as_str() {
        "V" => 0,
        "Q" => 1,
        "rho" => 2,
        "l" => 3,
        "pi_v" => 4,
        "pi_q" => 5,
        other => return Err(Failure::usage(format!("unknown field `{other}`"))),
    };
    let mut finals = Vec::new();
    for m in [n, 2 * n, 4 * n] {
        let grid = PeriodicGrid::new(m).map_err(Failure::usage)?;
        let state = make_initial_data(&spec, &grid)?;
        let end = evolve(state, tau_end, &config, |_, _| {})?;
        finals.push(end.arrays()[field].1.to_vec());
    }
    let r = convergence_order(&finals[0], &finals[1], &finals[2]).map_err(Failure::analysis)?;
    println!("field = {}", a.field);
    println!("resolutions = {n}, {}, {}", 2 * n, 4 * n);
    println!("diff_coarse = {}", format_value(r.coarse_diff));
    println!("diff_fine = {}", format_value(r.fine_diff));
    println!("order = {:.4}", r.order);
    println!("round_off_limited = {}", r.round_off_limited);
    Ok(())
}

fn cmd_batch(a: BatchArgs) -> Outcome {
    let cfg = load_config(&a.config)?;
    let class: BatchClass = pick!(a.class, cfg, str, "class")
        .ok_or_else(|| Failure::usage("--class is required"))?
        .parse()
        .map_err(Failure::usage)?;
    let count = pick_usize(a.count, &cfg, "count")?.unwrap_or(20);
    let mut bc = BatchConfig::new(class, count);
    bc.workers = pick_usize(a.workers, &cfg, "workers")?.unwrap_or(1);
    bc.seed = pick!(a.seed, cfg, u64, "seed").unwrap_or(0);
    bc.n = pick_usize(a.n, &cfg, "n")?.unwrap_or(bc.n);
    bc.tau_end = pick!(a.tau_end, cfg, f64, "tau-end").unwrap_or(bc.tau_end);
    bc.target_b = pick!(a.target_b, cfg, f64, "target-b").unwrap_or(bc.target_b);
    bc.rho0 = pick!(a.rho0, cfg, f64, "rho0").unwrap_or(bc.rho0);
    if !class.b_vanishes() && bc.target_b == 0.0 {
        return Err(Failure::usage("class generic needs a nonzero --target-b"));
    }
    let rows = run_batch(&bc).map_err(Failure::usage)?;
    let table = summary_table(class, &rows);
    print!("{table}");
    if let Some(path) = a.out.clone().or(cfg.str("out")?.map(PathBuf::from)) {
        std::fs::write(&path, &table).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Evolve(a) => cmd_evolve(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Oderef(a) => cmd_oderef(a),
        Command::Converge(a) => cmd_converge(a),
        Command::Batch(a) => cmd_batch(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("t2flow: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
