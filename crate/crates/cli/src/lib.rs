//! Command-line driver: configuration, the five commands, and the on-disk formats.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use coagself::fixedpoint::{self, estimate_rho_star, SweepTemplate};
use coagself::nonexist::{self, duality_gap, duality_schedule, power_law_profile, search_threshold};
use coagself::profile::{lambda_to_g, MassProfile};
use coagself::verify::{verify_profile, VerificationReport};
use coagself::{Field, KernelSpec, LogGrid, SolveConfig, SolveReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// Non-convergence or an unmet precondition.
    #[error("{0}")]
    Failed(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Failed(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

fn usage(e: coagself::Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn failed(e: coagself::Error) -> CliError {
    CliError::Failed(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "coagself", about = "Self-similar coagulation profiles for degree-one kernels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Solve for the profile and write it with a verification report.
    Solve(CommonArgs),
    /// Recompute the verification report of a stored profile.
    Validate(CommonArgs),
    /// Solve for several rho and tabulate convergence.
    Sweep(CommonArgs),
    /// Evaluate the duality inequality for a normalised profile.
    Probe(CommonArgs),
    /// Write a stored profile as JSON or CSV.
    Export(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON file with defaults for any of the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    /// Comma-separated rho values for `sweep`.
    #[arg(long, value_delimiter = ',')]
    pub rhos: Option<Vec<f64>>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// `xmin,xmax,n`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where `solve` writes the verification report; defaults next to `--out`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Input profile for `validate`, `probe` and `export`.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<ExportFormat>,
    /// `probe`: use the unit-mass power law `g ~ xi^-(2+alpha)` on `xi >= 1`.
    #[arg(long)]
    pub synthetic: bool,
    /// `probe`: rescale the profile to unit alpha-moment first.
    #[arg(long)]
    pub normalize: bool,
    /// `probe`: threshold mass A; searched by doubling when absent.
    #[arg(long = "threshold-a")]
    pub threshold_a: Option<f64>,
    #[arg(long)]
    pub r0: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Validate,
    Sweep,
    Probe,
    Export,
}

/// The same settings as the flags, read from `--config`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    kernel: Option<String>,
    rho: Option<f64>,
    rhos: Option<Vec<f64>>,
    beta: Option<f64>,
    eps: Option<f64>,
    tol: Option<f64>,
    #[serde(alias = "max-iter")]
    max_iter: Option<usize>,
    grid: Option<String>,
    out: Option<PathBuf>,
    report: Option<PathBuf>,
    profile: Option<PathBuf>,
    format: Option<ExportFormat>,
    synthetic: Option<bool>,
    normalize: Option<bool>,
    #[serde(alias = "threshold-a")]
    threshold_a: Option<f64>,
    r0: Option<f64>,
    b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    pub synthetic: bool,
    pub normalize: bool,
    pub threshold_a: Option<f64>,
    pub r0: Option<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub kernel: String,
    pub rho: Option<f64>,
    pub rhos: Vec<f64>,
    pub beta: Option<f64>,
    pub eps: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub grid: LogGrid,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub profile: Option<PathBuf>,
    pub format: ExportFormat,
    pub probe: ProbeParams,
}

pub const DEFAULT_SWEEP: [f64; 4] = [0.05, 0.1, 0.2, 0.3];
pub const DEFAULT_PROBE_B: f64 = 1.01;

fn parse_grid(s: &str) -> Result<LogGrid, CliError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || CliError::Usage(format!("grid must be 'xmin,xmax,n', got '{s}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let x_min: f64 = parts[0].parse().map_err(|_| bad())?;
    let x_max: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    LogGrid::new(x_min, x_max, n).map_err(usage)
}

fn check_rho(rho: f64) -> Result<(), CliError> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage("rho must lie in (0,1)".into()))
    }
}

/// Reads JSON, reporting parse failures with their byte offset.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Io(format!(
            "parse error in {} at byte {}: {e}",
            path.display(),
            byte_offset(&text, e.line(), e.column())
        ))
    })
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

/// Builds the run configuration from parsed flags; flags override `--config`.
pub fn parse_config(args: &Cli) -> Result<RunConfig, CliError> {
    let (command, a) = match &args.command {
        CommandArgs::Solve(a) => (Command::Solve, a),
        CommandArgs::Validate(a) => (Command::Validate, a),
        CommandArgs::Sweep(a) => (Command::Sweep, a),
        CommandArgs::Probe(a) => (Command::Probe, a),
        CommandArgs::Export(a) => (Command::Export, a),
    };
    let file: FileConfig = match &a.config {
        Some(p) => read_json(p).map_err(|e| match e {
            CliError::Io(m) => CliError::Usage(m),
            other => other,
        })?,
        None => FileConfig::default(),
    };
    let kernel = a.kernel.clone().or(file.kernel).unwrap_or_else(|| "additive".into());
    KernelSpec::from_name(&kernel).map_err(usage)?;
    let rho = a.rho.or(file.rho);
    if let Some(r) = rho {
        check_rho(r)?;
    }
    let rhos = a.rhos.clone().or(file.rhos).unwrap_or_else(|| DEFAULT_SWEEP.to_vec());
    for &r in &rhos {
        check_rho(r)?;
    }
    let grid = match a.grid.as_deref().or(file.grid.as_deref()) {
        Some(s) => parse_grid(s)?,
        None => LogGrid::default_grid(),
    };
    let cfg = RunConfig {
        command,
        kernel,
        rho,
        rhos,
        beta: a.beta.or(file.beta),
        eps: a.eps.or(file.eps).unwrap_or(0.1),
        tol: a.tol.or(file.tol).unwrap_or(1e-10),
        max_iter: a.max_iter.or(file.max_iter).unwrap_or(200),
        grid,
        out: a.out.clone().or(file.out),
        report: a.report.clone().or(file.report),
        profile: a.profile.clone().or(file.profile),
        format: a.format.or(file.format).unwrap_or(ExportFormat::Csv),
        probe: ProbeParams {
            synthetic: a.synthetic || file.synthetic.unwrap_or(false),
            normalize: a.normalize || file.normalize.unwrap_or(false),
            threshold_a: a.threshold_a.or(file.threshold_a),
            r0: a.r0.or(file.r0),
            b: a.b.or(file.b).unwrap_or(DEFAULT_PROBE_B),
        },
    };
    match command {
        Command::Solve if cfg.rho.is_none() => return Err(CliError::Usage("solve needs --rho".into())),
        Command::Validate | Command::Export if cfg.profile.is_none() => {
            return Err(CliError::Usage("--profile is required".into()))
        }
        Command::Probe if cfg.profile.is_none() && !cfg.probe.synthetic => {
            return Err(CliError::Usage("probe needs --profile or --synthetic".into()))
        }
        _ => {}
    }
    if command == Command::Solve {
        cfg.solve_config()?.validate().map_err(usage)?;
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn solve_config(&self) -> Result<SolveConfig, CliError> {
        let rho = self.rho.ok_or_else(|| CliError::Usage("rho is not set".into()))?;
        let mut c = SolveConfig::new(rho);
        if let Some(b) = self.beta {
            c.beta = b;
        }
        c.eps = self.eps;
        c.tol = self.tol;
        c.max_iter = self.max_iter;
        c.grid = self.grid;
        Ok(c)
    }
}

/// A solved profile as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub kernel: String,
    pub rho: f64,
    pub config: SolveConfig,
    pub lambda: Field,
    pub report: SolveReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub alpha: f64,
    pub beta0: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "R0")]
    pub r0: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "M_dual")]
    pub m_dual: f64,
    #[serde(rename = "omega_R0")]
    pub omega_r0: f64,
    pub q: f64,
    pub n_bar: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub flag: bool,
    pub b_hat: f64,
}

/// Result of a command that completed.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    /// Printed on stdout when no output file was requested.
    pub stdout: Option<String>,
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable value");
    s.push('\n');
    s
}

fn emit(out: &Option<PathBuf>, text: String, written: &mut Vec<PathBuf>) -> Result<Option<String>, CliError> {
    match out {
        Some(p) => {
            write_file(p, &text)?;
            written.push(p.clone());
            Ok(None)
        }
        None => Ok(Some(text)),
    }
}

/// `p.json` -> `p.verify.json`.
pub fn default_report_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.verify.json"))
}

pub fn load_profile(path: &Path) -> Result<ProfileFile, CliError> {
    read_json(path)
}

pub fn run_command(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = KernelSpec::from_name(&cfg.kernel).map_err(usage)?;
    let mut written = Vec::new();
    match cfg.command {
        Command::Solve => {
            let sc = cfg.solve_config()?;
            let (lam, report) = fixedpoint::solve(&spec, &sc).map_err(failed)?;
            let converged = report.converged;
            let file = ProfileFile { kernel: cfg.kernel.clone(), rho: sc.rho, config: sc, lambda: lam, report };
            let stdout = emit(&cfg.out, to_json(&file), &mut written)?;
            if !converged {
                return Err(CliError::Failed(format!(
                    "no convergence after {} iterations (last increment {:e}); partial profile written",
                    file.report.iterations, file.report.final_weighted_residual
                )));
            }
            let verification = verify_profile(&file.lambda, &spec, sc.rho, sc.beta).map_err(failed)?;
            let report_path = cfg.report.clone().or_else(|| cfg.out.as_deref().map(default_report_path));
            let extra = emit(&report_path, to_json(&verification), &mut written)?;
            Ok(Outcome { written, stdout: stdout.map(|s| s + &extra.unwrap_or_default()) })
        }
        Command::Validate => {
            let p = load_profile(cfg.profile.as_deref().expect("checked in parse_config"))?;
            let spec = KernelSpec::from_name(&p.kernel).map_err(usage)?;
            let v: VerificationReport = verify_profile(&p.lambda, &spec, p.rho, p.config.beta).map_err(failed)?;
            let stdout = emit(&cfg.out, to_json(&v), &mut written)?;
            Ok(Outcome { written, stdout })
        }
        Command::Sweep => {
            let template =
                SweepTemplate { beta: cfg.beta, eps: cfg.eps, tol: cfg.tol, max_iter: cfg.max_iter, grid: cfg.grid };
            let sweep = estimate_rho_star(&spec, &cfg.rhos, &template).map_err(usage)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| CliError::Io(e.to_string());
            w.write_record(["rho", "converged", "iterations", "max_ratio", "final_weighted_residual", "error"])
                .map_err(io)?;
            for e in &sweep.entries {
                w.write_record([
                    fmt_f64(e.rho),
                    e.converged.to_string(),
                    e.iterations.to_string(),
                    fmt_f64(e.max_ratio),
                    fmt_f64(e.final_weighted_residual),
                    e.error.clone().unwrap_or_default(),
                ])
                .map_err(io)?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
            let stdout = emit(&cfg.out, String::from_utf8(bytes).expect("ascii csv"), &mut written)?;
            Ok(Outcome { written, stdout })
        }
        Command::Probe => {
            let report = probe(cfg, &spec)?;
            let stdout = emit(&cfg.out, to_json(&report), &mut written)?;
            Ok(Outcome { written, stdout })
        }
        Command::Export => {
            let path = cfg.profile.as_deref().expect("checked in parse_config");
            let p = load_profile(path)?;
            let text = match cfg.format {
                ExportFormat::Json => to_json(&p),
                ExportFormat::Csv => profile_csv(&p)?,
            };
            let stdout = emit(&cfg.out, text, &mut written)?;
            Ok(Outcome { written, stdout })
        }
    }
}

fn probe(cfg: &RunConfig, spec: &KernelSpec) -> Result<ProbeReport, CliError> {
    let alpha = spec.alpha;
    let mut g: MassProfile = if cfg.probe.synthetic {
        power_law_profile(alpha, 60.0, 2048).map_err(failed)?
    } else {
        let p = load_profile(cfg.profile.as_deref().expect("checked in parse_config"))?;
        lambda_to_g(&p.lambda, p.rho).map_err(failed)?
    };
    if cfg.probe.normalize {
        g = nonexist::normalize_moment(&g, alpha).map_err(failed)?;
    }
    let a = match cfg.probe.threshold_a {
        Some(a) => a,
        None => search_threshold(&g, spec, 1e-8, 40)
            .map_err(failed)?
            .a
            .ok_or_else(|| CliError::Failed("no threshold A found by doubling".into()))?,
    };
    let d = 2f64.powf((2.0 * alpha + 1.0) / alpha) * a;
    let r0 = cfg.probe.r0.unwrap_or(100.0 * d);
    let sched = duality_schedule(r0, alpha, spec.beta0, a).map_err(failed)?;
    let gap = duality_gap(&g, &sched, cfg.probe.b).map_err(failed)?;
    Ok(ProbeReport {
        alpha,
        beta0: spec.beta0,
        a,
        r0,
        d: sched.d,
        m_dual: sched.m_dual,
        omega_r0: sched.omega_r0,
        q: sched.q,
        n_bar: sched.n_bar,
        lhs: gap.lhs,
        rhs: gap.rhs,
        flag: gap.flag,
        b_hat: gap.b_hat,
    })
}

/// Seventeen significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Formats `sign * e^{ln_abs}` in scientific notation even when it is outside the range of f64.
pub fn fmt_from_ln(sign: f64, ln_abs: f64) -> String {
    if sign == 0.0 || ln_abs == f64::NEG_INFINITY {
        return fmt_f64(0.0);
    }
    let direct = sign * ln_abs.exp();
    if direct.is_normal() {
        return fmt_f64(direct);
    }
    let l10 = ln_abs / std::f64::consts::LN_10;
    let mut e = l10.floor();
    let mut m = 10f64.powf(l10 - e);
    if m >= 10.0 {
        m /= 10.0;
        e += 1.0;
    }
    let s = if sign < 0.0 { "-" } else { "" };
    format!("{s}{m:.16}e{}{}", if e < 0.0 { "-" } else { "" }, e.abs() as i64)
}

/// CSV with columns `x,lambda,xi,g`.
pub fn profile_csv(p: &ProfileFile) -> Result<String, CliError> {
    let lam = &p.lambda;
    let rho = p.rho;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["x", "lambda", "xi", "g"]).map_err(io)?;
    for i in 0..lam.grid.n {
        let x = lam.grid.point(i);
        let l = lam.values[i];
        let u = x / rho;
        // g = rho lambda / xi
        let g = fmt_from_ln(l.signum(), (rho * l.abs()).ln() - u);
        w.write_record([fmt_f64(x), fmt_f64(l), fmt_from_ln(1.0, u), g]).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("ascii csv"))
}

/// Applies `COAGSELF_THREADS` (0 or unset: rayon's default).
pub fn configure_threads() -> Result<(), CliError> {
    let n = match std::env::var("COAGSELF_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("COAGSELF_THREADS must be a nonnegative integer, got '{v}'")))?,
        Err(_) => 0,
    };
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))?;
    }
    Ok(())
}
