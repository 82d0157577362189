//! Command layer behind the `bloch-feedback` binary.
//!
//! Every command resolves its flags into a concrete parameter set, calls the
//! library, and writes CSV files plus a `<command>.manifest.json` recording
//! the resolved arguments. `--from-manifest` replays a manifest.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::{BlochVector, TOL_BLOCH};
use crate::design::{self, FeedbackDesign, Objective, SearchConfig, EQUATOR_COS_TOL};
use crate::error::Error;
use crate::output::{self, fmt_g};
use crate::sde::{self, SimConfig, DEFAULT_DT};
use crate::steady_state::{drift_model, stability_eigenvalues, StabilityReport, SystemParams};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "BLOCH_FEEDBACK_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DOMAIN: i32 = 2;
pub const EXIT_STATISTICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "bloch-feedback", version, about = "Feedback stabilization of a driven two-level atom")]
#[command(args_conflicts_with_subcommands = true, arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    /// Replay the run recorded in a manifest file.
    #[arg(long, value_name = "FILE")]
    pub from_manifest: Option<PathBuf>,
    /// Output directory for the replay (defaults to the recorded one).
    #[arg(long, requires = "from_manifest")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Optimal feedback design for one target direction.
    Design(DesignArgs),
    /// Optimal-purity locus over a grid of directions, one CSV per efficiency.
    Locus(LocusArgs),
    /// One conditioned trajectory.
    Simulate(SimulateArgs),
    /// Ensemble statistics checked against the deterministic Bloch equations.
    Ensemble(EnsembleArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Design(_) => "design",
            Command::Locus(_) => "locus",
            Command::Simulate(_) => "simulate",
            Command::Ensemble(_) => "ensemble",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DesignArgs {
    /// Target direction: radians, or a multiple of pi such as `pi/6`, `-3pi/4`.
    #[arg(long, value_parser = parse_angle, allow_hyphen_values = true)]
    pub theta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    #[arg(long, value_enum, default_value_t = Objective::Purity)]
    pub objective: Objective,
    /// Design at `theta` shifted by this much when the target is equatorial.
    #[arg(long)]
    pub near_equator_offset: Option<f64>,
    /// Print JSON instead of the text summary.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct LocusArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,0.8,0.6,0.4,0.2,0")]
    pub eta: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 180)]
    pub n_theta: usize,
    #[arg(long, value_enum, default_value_t = Objective::Purity)]
    pub objective: Objective,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Flags shared by `simulate` and `ensemble`.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimArgs {
    /// Target direction; the feedback is designed for it unless `--alpha`
    /// and `--lambda` are given.
    #[arg(long, value_parser = parse_angle, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    #[arg(long, value_enum, default_value_t = Objective::Purity)]
    pub objective: Objective,
    #[arg(long)]
    pub near_equator_offset: Option<f64>,
    /// Explicit driving strength (requires `--lambda`).
    #[arg(long, allow_hyphen_values = true, requires = "lambda")]
    pub alpha: Option<f64>,
    /// Explicit feedback gain (requires `--alpha`).
    #[arg(long, allow_hyphen_values = true, requires = "alpha")]
    pub lambda: Option<f64>,
    /// Time step; defaults to 1e-3/gamma.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub t_final: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `ground`, `excited`, `mixed` or `x,y,z`.
    #[arg(long, value_parser = parse_state, default_value = "ground", allow_hyphen_values = true)]
    pub initial: BlochVector,
    #[arg(long)]
    pub record_every: Option<usize>,
    #[arg(long)]
    pub allow_large_dt: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Which noise substream of `--seed` drives the trajectory.
    #[arg(long, default_value_t = 0)]
    pub trajectory_index: u64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, default_value_t = 1000)]
    pub n_trajectories: usize,
    /// Number of sample times when `--record-every` is not given.
    #[arg(long, default_value_t = 20)]
    pub n_times: usize,
    /// Equivalence threshold in standard errors.
    #[arg(long, default_value_t = 4.0)]
    pub n_sigma: f64,
}

/// Record of one run, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments with every default filled in; replaying them reproduces the
    /// artifacts.
    pub args: Command,
    pub params: Vec<SystemParams>,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Statistical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Domain(_) => EXIT_DOMAIN,
            CliError::Statistical(_) => EXIT_STATISTICAL,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParams(_) | Error::Io(_) | Error::OutsideBlochBall { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

/// What a successful command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub stdout: String,
    pub manifest: Option<RunManifest>,
    pub manifest_path: Option<PathBuf>,
}

/// Parses `pi`, `-pi/2`, `3pi/4`, `2*pi/3`, `π/6` or plain radians.
pub fn parse_angle(s: &str) -> Result<f64, String> {
    let t = s.trim().replace('π', "pi").to_ascii_lowercase();
    let value = match t.find("pi") {
        Some(idx) => {
            let coef = match t[..idx].trim_end_matches('*') {
                "" | "+" => 1.0,
                "-" => -1.0,
                c => c.parse::<f64>().map_err(|e| format!("bad coefficient in `{s}`: {e}"))?,
            };
            let rest = &t[idx + 2..];
            let den = if rest.is_empty() {
                1.0
            } else {
                let d = rest.strip_prefix('/').ok_or_else(|| format!("cannot parse angle `{s}`"))?;
                d.parse::<f64>().map_err(|e| format!("bad divisor in `{s}`: {e}"))?
            };
            if den == 0.0 {
                return Err(format!("zero divisor in `{s}`"));
            }
            coef * PI / den
        }
        None => t.parse::<f64>().map_err(|e| format!("cannot parse angle `{s}`: {e}"))?,
    };
    if !value.is_finite() {
        return Err(format!("angle `{s}` is not finite"));
    }
    Ok(value)
}

/// Parses `ground`, `excited`, `mixed` or a comma-separated Bloch vector.
pub fn parse_state(s: &str) -> Result<BlochVector, String> {
    let b = match s.trim().to_ascii_lowercase().as_str() {
        "ground" => BlochVector::GROUND,
        "excited" => BlochVector::EXCITED,
        "mixed" => BlochVector::MIXED,
        other => {
            let parts: Vec<f64> = other
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| format!("bad state `{s}`: {e}"))?;
            if parts.len() != 3 {
                return Err(format!("state `{s}` needs three components"));
            }
            BlochVector::new(parts[0], parts[1], parts[2])
        }
    };
    b.check(TOL_BLOCH).map_err(|e| e.to_string())?;
    Ok(b)
}

fn is_equatorial(theta: f64) -> bool {
    theta.cos().abs() < EQUATOR_COS_TOL
}

fn equator_error(theta: f64) -> CliError {
    CliError::Domain(format!(
        "theta = {} is on the equator, where the closed-loop eigenvalue -gamma cos^2(theta) vanishes \
         and the fixed point is only marginally stable; pass --near-equator-offset to design nearby",
        fmt_g(theta)
    ))
}

fn check_flags(gamma: f64, eta: f64) -> Result<(), CliError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(CliError::Usage(format!("--gamma must be > 0, got {gamma}")));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(CliError::Usage(format!("--eta must lie in [0, 1], got {eta}")));
    }
    Ok(())
}

fn search_config(offset: Option<f64>) -> Result<SearchConfig, CliError> {
    let mut cfg = SearchConfig::default();
    if let Some(off) = offset {
        if !(off > 0.0 && off < 0.5) {
            return Err(CliError::Usage(format!("--near-equator-offset must lie in (0, 0.5), got {off}")));
        }
        cfg.equator_offset = off;
    }
    Ok(cfg)
}

/// Resolves the physical parameters a simulation runs with.
///
/// Explicit `--alpha/--lambda` win. Otherwise `theta` is designed: at
/// `eta = 1` with the exact closed form (equatorial targets included, since
/// the trajectory study of that case is legitimate), else with the optimizer.
pub fn resolve_params(a: &SimArgs) -> Result<SystemParams, CliError> {
    check_flags(a.gamma, a.eta)?;
    if let (Some(alpha), Some(lambda)) = (a.alpha, a.lambda) {
        return Ok(SystemParams::new(a.gamma, a.eta, alpha, lambda)?);
    }
    let theta = a.theta.ok_or_else(|| CliError::Usage("give --theta or both --alpha and --lambda".into()))?;
    if a.eta == 1.0 {
        let lambda = design::lambda_eta1(theta, a.gamma);
        let alpha = design::alpha_eta1(theta, a.gamma);
        return Ok(SystemParams::new(a.gamma, a.eta, alpha, lambda)?);
    }
    if is_equatorial(theta) && a.near_equator_offset.is_none() {
        return Err(equator_error(theta));
    }
    let cfg = search_config(a.near_equator_offset)?;
    Ok(design::design(theta, a.gamma, a.eta, a.objective, &cfg)?.params())
}

/// Builds the simulation configuration from resolved arguments.
pub fn sim_config(a: &SimArgs, params: SystemParams, n_trajectories: usize) -> SimConfig {
    let mut cfg = SimConfig::new(params, a.t_final, a.seed);
    cfg.dt = a.dt.unwrap_or(DEFAULT_DT / a.gamma);
    cfg.initial_state = a.initial;
    cfg.record_every = a.record_every.unwrap_or(1);
    cfg.allow_large_dt = a.allow_large_dt;
    cfg.n_trajectories = n_trajectories;
    cfg
}

fn out_dir(out: &Option<PathBuf>) -> PathBuf {
    out.clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))
}

/// Manifest fields gathered while a command runs.
struct RunRecord {
    params: Vec<SystemParams>,
    seeds: Vec<u64>,
    artifacts: Vec<PathBuf>,
    warnings: Vec<String>,
}

fn finish(dir: &Path, args: Command, rec: RunRecord, started: Instant, stdout: String) -> Result<Outcome, CliError> {
    let manifest = RunManifest {
        command: args.name().to_string(),
        args,
        params: rec.params,
        seeds: rec.seeds,
        artifacts: rec.artifacts,
        warnings: rec.warnings,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let path = dir.join(format!("{}.manifest.json", manifest.command));
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Usage(e.to_string()))?;
    write_file(&path, &(json + "\n"))?;
    Ok(Outcome { stdout, manifest: Some(manifest), manifest_path: Some(path) })
}

/// JSON payload of the `design` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignOutput {
    pub design: FeedbackDesign,
    pub stability: StabilityReport,
}

fn fmt_complex(c: Complex64) -> String {
    if c.im == 0.0 {
        fmt_g(c.re)
    } else {
        let sign = if c.im < 0.0 { '-' } else { '+' };
        format!("{}{sign}{}i", fmt_g(c.re), fmt_g(c.im.abs()))
    }
}

pub fn run_design(a: &DesignArgs) -> Result<Outcome, CliError> {
    check_flags(a.gamma, a.eta)?;
    if is_equatorial(a.theta) && a.near_equator_offset.is_none() {
        return Err(equator_error(a.theta));
    }
    let cfg = search_config(a.near_equator_offset)?;
    let d = design::design(a.theta, a.gamma, a.eta, a.objective, &cfg)?;
    let stability = stability_eigenvalues(&d.params())?;
    let stdout = if a.json {
        let out = DesignOutput { design: d, stability };
        serde_json::to_string_pretty(&out).map_err(|e| CliError::Usage(e.to_string()))? + "\n"
    } else {
        let ss = d.steady_state;
        let eigs: Vec<String> = stability.eigenvalues.iter().map(|&c| fmt_complex(c)).collect();
        let mut pairs = vec![
            ("theta", fmt_g(d.theta)),
            ("lambda", fmt_g(d.lambda_opt)),
            ("alpha", fmt_g(d.alpha_opt)),
            ("steady_state", format!("{} {} {}", fmt_g(ss.x), fmt_g(ss.y), fmt_g(ss.z))),
            ("r_squared", fmt_g(d.r_squared)),
            ("noise_norm", fmt_g(d.noise_norm)),
            ("eigenvalues", eigs.join(" ")),
            ("stability", stability.classification.to_string()),
        ];
        if d.equator_flag {
            pairs.push(("note", format!("equatorial target {} shifted to {}", fmt_g(d.requested_theta), fmt_g(d.theta))));
        }
        if d.outside_nominal {
            pairs.push(("note", "optimal gain lies outside [-sqrt(gamma), 0]".into()));
        }
        output::kv_block(&pairs)
    };
    Ok(Outcome { stdout, manifest: None, manifest_path: None })
}

pub fn run_locus(a: &LocusArgs) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let dir = out_dir(&a.out);
    if a.eta.is_empty() {
        return Err(CliError::Usage("--eta needs at least one value".into()));
    }
    for &eta in &a.eta {
        check_flags(a.gamma, eta)?;
    }
    if a.n_theta == 0 {
        return Err(CliError::Usage("--n-theta must be >= 1".into()));
    }
    prepare_dir(&dir)?;
    let grid = design::theta_grid(a.n_theta);
    let cfg = SearchConfig::default();
    let mut artifacts = Vec::new();
    let mut stdout = String::new();
    for &eta in &a.eta {
        let table = design::build_locus(eta, a.gamma, &grid, a.objective, &cfg)?;
        let path = dir.join(format!("locus_eta_{}.csv", fmt_g(eta)));
        write_file(&path, &output::locus_csv(&table))?;
        let failed = table.rows.iter().filter(|r| r.error.is_some()).count();
        let _ = writeln!(stdout, "{}  ({} rows, {failed} flagged)", path.display(), table.rows.len());
        artifacts.push(path);
    }
    let args = Command::Locus(LocusArgs { out: Some(dir.clone()), ..a.clone() });
    let rec = RunRecord { params: Vec::new(), seeds: Vec::new(), artifacts, warnings: Vec::new() };
    finish(&dir, args, rec, started, stdout)
}

pub fn run_simulate(a: &SimulateArgs) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let dir = out_dir(&a.sim.out);
    let params = resolve_params(&a.sim)?;
    let cfg = sim_config(&a.sim, params, 1);
    let tr = sde::simulate_trajectory(&cfg, a.trajectory_index)?;
    for w in &tr.warnings {
        eprintln!("warning: {w}");
    }
    prepare_dir(&dir)?;
    let path = dir.join("trajectory.csv");
    write_file(&path, &output::trajectory_csv(&tr))?;
    let end = tr.final_state();
    let stdout = format!(
        "{}  final state {} {} {}  max |r^2 - 1| {}\n",
        path.display(),
        fmt_g(end.x),
        fmt_g(end.y),
        fmt_g(end.z),
        fmt_g(tr.max_purity_deviation())
    );
    let mut sim = a.sim.clone();
    sim.dt = Some(cfg.dt);
    sim.record_every = Some(cfg.record_every);
    sim.out = Some(dir.clone());
    let args = Command::Simulate(SimulateArgs { sim, ..a.clone() });
    let rec = RunRecord { params: vec![params], seeds: vec![a.sim.seed], artifacts: vec![path], warnings: tr.warnings };
    finish(&dir, args, rec, started, stdout)
}

pub fn run_ensemble(a: &EnsembleArgs) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let dir = out_dir(&a.sim.out);
    let params = resolve_params(&a.sim)?;
    let mut cfg = sim_config(&a.sim, params, a.n_trajectories);
    if a.sim.record_every.is_none() {
        cfg.record_every = (cfg.n_steps() / a.n_times.max(1)).max(1);
    }
    let warnings = cfg.validate()?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let stats = sde::ensemble(&cfg)?;
    let report = stats.compare_deterministic(&drift_model(&params)?, &cfg.initial_state, a.n_sigma);
    prepare_dir(&dir)?;
    let path = dir.join("ensemble.csv");
    write_file(&path, &output::ensemble_csv(&stats, &report))?;
    let mut stdout = format!(
        "{}  max |mean - deterministic| / stderr = {} at t = {}\n",
        path.display(),
        fmt_g(report.max_z_score),
        fmt_g(report.worst_time)
    );
    let mut sim = a.sim.clone();
    sim.dt = Some(cfg.dt);
    sim.record_every = Some(cfg.record_every);
    sim.out = Some(dir.clone());
    let args = Command::Ensemble(EnsembleArgs { sim, ..a.clone() });
    let rec = RunRecord { params: vec![params], seeds: vec![a.sim.seed], artifacts: vec![path], warnings };
    let outcome = finish(&dir, args, rec, started, String::new())?;
    if !stats.stderr_defined {
        stdout.push_str("equivalence test skipped: standard errors need at least two trajectories\n");
    } else if report.pass {
        let _ = writeln!(stdout, "equivalence test passed at {} sigma", fmt_g(a.n_sigma));
    } else {
        return Err(CliError::Statistical(format!(
            "{stdout}equivalence test failed: deviation of {} standard errors exceeds {}",
            fmt_g(report.max_z_score),
            fmt_g(a.n_sigma)
        )));
    }
    Ok(Outcome { stdout, ..outcome })
}

pub fn run_command(cmd: &Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::Design(a) => run_design(a),
        Command::Locus(a) => run_locus(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Ensemble(a) => run_ensemble(a),
    }
}

/// Re-executes a manifest, optionally into another directory.
pub fn replay(manifest: &Path, out: Option<PathBuf>) -> Result<Outcome, CliError> {
    let m = RunManifest::read(manifest)?;
    let mut cmd = m.args;
    if let Some(dir) = out {
        match &mut cmd {
            Command::Design(_) => {}
            Command::Locus(a) => a.out = Some(dir),
            Command::Simulate(a) => a.sim.out = Some(dir),
            Command::Ensemble(a) => a.sim.out = Some(dir),
        }
    }
    run_command(&cmd)
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    match (&cli.command, &cli.from_manifest) {
        (_, Some(path)) => replay(path, cli.out.clone()),
        (Some(cmd), None) => run_command(cmd),
        (None, None) => Err(CliError::Usage("no command given".into())),
    }
}
