//! Command-line entry point: argument and config-file resolution, dispatch
//! to the experiments, and JSON/CSV reports.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::dynamics::{orbit, periodic_cycle, simulate_orbits, MapKind, OrbitConfig, RationalCycle};
use crate::error::{Error, Result};
use crate::numeric::geometric_grid;
use crate::observables::{growth_check, seminorm_estimate, tilde_fn, ObservableSpec, SeminormConfig};
use crate::stats::{clt_experiment_with, coboundary_cycle_sum, sigma2_series, strong_law_check, FLAG_BUDGET};
use crate::transfer::{correlation_decay, seminorm_contraction_check, spectrum, ulam_matrix};
use crate::zeta::{growth_exponent_fit, ZetaConfig};

pub const THREADS_ENV: &str = "ERGOZETA_THREADS";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Simulate,
    Clt,
    Sigma2,
    Coboundary,
    Spectrum,
    Seminorm,
    Growth,
    StrongLaw,
    Decay,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Clt => "clt",
            Self::Sigma2 => "sigma2",
            Self::Coboundary => "coboundary",
            Self::Spectrum => "spectrum",
            Self::Seminorm => "seminorm",
            Self::Growth => "growth",
            Self::StrongLaw => "strong-law",
            Self::Decay => "decay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Observable: zeta-re, zeta-im, zeta-abs, const:c, digit, cos, power:p, coboundary, lorentz, lorentz-odd, angle
    #[arg(long)]
    pub obs: Option<String>,
    /// Real part of the zeta argument
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<f64>,
    /// Orbit length (trajectory count for sigma2 and decay, grid size for growth)
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    #[arg(long = "k-max")]
    pub k_max: Option<usize>,
    /// Ulam resolution exponent
    #[arg(long)]
    pub m: Option<u32>,
    /// Periodic point p/q of the doubling map
    #[arg(long)]
    pub cycle: Option<String>,
    /// Starting point of a single orbit
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Flat key=value file; command-line flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Dump φ-orbits from μ-distributed or given starting points
    Simulate(Flags),
    /// Monte-Carlo central limit experiment
    Clt(Flags),
    /// σ² from the covariance series
    Sigma2(Flags),
    /// Periodic-cycle sum of the pulled-back observable
    Coboundary(Flags),
    /// Ulam spectrum of the doubling map
    Spectrum(Flags),
    /// Oscillation seminorm and its contraction under the transfer operator
    Seminorm(Flags),
    /// Envelope growth exponents of ζ, ζ' and the observable
    Growth(Flags),
    /// Time averages against the quadrature mean
    StrongLaw(Flags),
    /// Decay of correlations
    Decay(Flags),
}

#[derive(Debug, Parser)]
#[command(name = "ergozeta", version, about = "Birkhoff sums of zeta along Boolean-type orbits")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Fully resolved run configuration, echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub obs: String,
    pub s: Option<f64>,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub k_max: usize,
    pub m: u32,
    pub cycle: Option<String>,
    pub x0: Option<f64>,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub threads: Option<usize>,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

#[derive(Debug)]
pub enum CliError {
    /// Help, version or a malformed command line, as rendered by clap.
    Clap(clap::Error),
    Invalid(Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Clap(e) => write!(f, "{e}"),
            Self::Invalid(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::Invalid(e)
    }
}

const CONFIG_KEYS: [&str; 14] = [
    "obs", "s", "n", "trials", "seed", "alpha", "beta", "k_max", "m", "cycle", "x0", "output", "format", "threads",
];

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::invalid(format!("config key '{key}': cannot parse '{v}'")))
}

/// Reads a flat `key = value` file; `#` starts a comment.
pub fn read_config_file(path: &Path) -> Result<Flags> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config_text(&text)
}

pub fn parse_config_text(text: &str) -> Result<Flags> {
    let mut f = Flags::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("config line {}: expected key=value", lineno + 1)))?;
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(Error::invalid(format!("unknown config key '{key}'")));
        }
        match key.as_str() {
            "obs" => f.obs = Some(value.to_string()),
            "s" => f.s = Some(parse_value(&key, value)?),
            "n" => f.n = Some(parse_value(&key, value)?),
            "trials" => f.trials = Some(parse_value(&key, value)?),
            "seed" => f.seed = Some(parse_value(&key, value)?),
            "alpha" => f.alpha = Some(parse_value(&key, value)?),
            "beta" => f.beta = Some(parse_value(&key, value)?),
            "k_max" => f.k_max = Some(parse_value(&key, value)?),
            "m" => f.m = Some(parse_value(&key, value)?),
            "cycle" => f.cycle = Some(value.to_string()),
            "x0" => f.x0 = Some(parse_value(&key, value)?),
            "output" => f.output = Some(PathBuf::from(value)),
            "format" => {
                f.format = Some(
                    Format::from_str(value, true)
                        .map_err(|_| Error::invalid(format!("config key 'format': unknown format '{value}'")))?,
                )
            }
            "threads" => f.threads = Some(parse_value(&key, value)?),
            _ => unreachable!(),
        }
    }
    Ok(f)
}

/// Parses `p/q`.
pub fn parse_cycle(text: &str) -> Result<RationalCycle> {
    let (p, q) = text
        .split_once('/')
        .ok_or_else(|| Error::invalid(format!("cycle '{text}' is not of the form p/q")))?;
    let p: u64 = parse_value("cycle", p.trim())?;
    let q: u64 = parse_value("cycle", q.trim())?;
    periodic_cycle(p, q)
}

fn merge(cli: Flags, file: Flags) -> Flags {
    Flags {
        obs: cli.obs.or(file.obs),
        s: cli.s.or(file.s),
        n: cli.n.or(file.n),
        trials: cli.trials.or(file.trials),
        seed: cli.seed.or(file.seed),
        alpha: cli.alpha.or(file.alpha),
        beta: cli.beta.or(file.beta),
        k_max: cli.k_max.or(file.k_max),
        m: cli.m.or(file.m),
        cycle: cli.cycle.or(file.cycle),
        x0: cli.x0.or(file.x0),
        output: cli.output.or(file.output),
        format: cli.format.or(file.format),
        threads: cli.threads.or(file.threads),
        config: cli.config,
    }
}

fn default_n(cmd: CommandKind) -> usize {
    match cmd {
        CommandKind::Simulate => 100,
        CommandKind::StrongLaw => 100_000,
        CommandKind::Growth => 60,
        _ => 1000,
    }
}

fn default_trials(cmd: CommandKind) -> usize {
    match cmd {
        CommandKind::Simulate => 10,
        CommandKind::StrongLaw => 50,
        _ => 1000,
    }
}

/// Resolves flags over config-file keys over defaults and validates the
/// result for the chosen command.
pub fn parse_config<I, T>(args: I) -> std::result::Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(CliError::Clap)?;
    let (command, flags) = match cli.cmd {
        Cmd::Simulate(f) => (CommandKind::Simulate, f),
        Cmd::Clt(f) => (CommandKind::Clt, f),
        Cmd::Sigma2(f) => (CommandKind::Sigma2, f),
        Cmd::Coboundary(f) => (CommandKind::Coboundary, f),
        Cmd::Spectrum(f) => (CommandKind::Spectrum, f),
        Cmd::Seminorm(f) => (CommandKind::Seminorm, f),
        Cmd::Growth(f) => (CommandKind::Growth, f),
        Cmd::StrongLaw(f) => (CommandKind::StrongLaw, f),
        Cmd::Decay(f) => (CommandKind::Decay, f),
    };
    let file = match &flags.config {
        Some(p) => read_config_file(p)?,
        None => Flags::default(),
    };
    let f = merge(flags, file);
    let threads = match f.threads {
        Some(t) => Some(t),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => Some(
                v.trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("{THREADS_ENV} = '{v}' is not a thread count")))?,
            ),
            _ => None,
        },
    };
    let obs = f.obs.unwrap_or_else(|| "zeta-re".to_string());
    let is_zeta = obs.trim().starts_with("zeta-");
    let mut warnings = Vec::new();
    let s = if is_zeta {
        Some(f.s.unwrap_or(0.5))
    } else {
        if f.s.is_some() {
            warnings.push(format!("--s is ignored for the builtin observable '{obs}'"));
        }
        None
    };
    let cfg = RunConfig {
        command,
        obs,
        s,
        n: f.n.unwrap_or_else(|| default_n(command)),
        trials: f.trials.unwrap_or_else(|| default_trials(command)),
        seed: f.seed.unwrap_or(0),
        alpha: f.alpha,
        beta: f.beta,
        k_max: f.k_max.unwrap_or(crate::stats::DEFAULT_K_MAX),
        m: f.m.unwrap_or(8),
        cycle: f.cycle,
        x0: f.x0,
        output: f.output,
        format: f.format.unwrap_or(Format::Json),
        threads,
        warnings,
    };
    validate(cfg).map_err(CliError::Invalid)
}

fn validate(mut cfg: RunConfig) -> Result<RunConfig> {
    let spec = cfg.spec()?;
    if let Some(s) = cfg.s {
        if s <= 1.0 / 3.0 {
            cfg.warnings.push(format!(
                "s = {s} ≤ 1/3: the growth exponent (1-s)/2 is not below 1/3, outside the range of the limit theorem"
            ));
        }
    }
    if cfg.threads == Some(0) {
        return Err(Error::invalid("--threads must be positive"));
    }
    let need = |ok: bool, msg: String| if ok { Ok(()) } else { Err(Error::invalid(msg)) };
    match cfg.command {
        CommandKind::Simulate => need(cfg.n >= 1 && cfg.trials >= 1, "simulate needs n ≥ 1 and trials ≥ 1".into())?,
        CommandKind::Clt => {
            need(cfg.n >= 100 && cfg.trials >= 100, format!("clt needs n ≥ 100 and trials ≥ 100, got {} and {}", cfg.n, cfg.trials))?;
            need(cfg.k_max >= 1 && cfg.k_max < cfg.n, format!("k_max = {} must lie in 1..n", cfg.k_max))?;
        }
        CommandKind::Sigma2 => need(cfg.n >= 2 && cfg.k_max >= 1, "sigma2 needs n ≥ 2 trajectories and k_max ≥ 1".into())?,
        CommandKind::Decay => need(cfg.n >= 2 && cfg.k_max >= 2, "decay needs n ≥ 2 trajectories and k_max ≥ 2".into())?,
        CommandKind::StrongLaw => {
            need(cfg.n >= 1000 && cfg.trials >= 2, format!("strong-law needs n ≥ 1000 and trials ≥ 2, got {} and {}", cfg.n, cfg.trials))?
        }
        CommandKind::Coboundary => {
            let c = cfg.cycle.as_deref().ok_or_else(|| Error::invalid("coboundary needs --cycle p/q"))?;
            parse_cycle(c)?;
        }
        CommandKind::Spectrum => {
            ulam_matrix(cfg.m)?;
        }
        CommandKind::Seminorm => {
            let (a, b) = cfg.alpha_beta(&spec);
            need(a > 0.0 && a < b && b <= 1.0, format!("need 0 < α < β ≤ 1, got α = {a}, β = {b}"))?;
        }
        CommandKind::Growth => need(cfg.n >= 50, format!("growth needs at least 50 grid points, got {}", cfg.n))?,
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn spec(&self) -> Result<ObservableSpec> {
        ObservableSpec::parse(&self.obs, self.s)
    }

    fn alpha_beta(&self, spec: &ObservableSpec) -> (f64, f64) {
        let (a, b) = spec.default_alpha_beta();
        (self.alpha.unwrap_or(a), self.beta.unwrap_or(b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub evaluations: u64,
    pub flagged: u64,
    pub flagged_fraction: f64,
    pub clean: bool,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    fn new(evaluations: u64, flagged: u64, warnings: Vec<String>) -> Self {
        let flagged_fraction = if evaluations == 0 { 0.0 } else { flagged as f64 / evaluations as f64 };
        Self {
            evaluations,
            flagged,
            flagged_fraction,
            clean: flagged_fraction < FLAG_BUDGET,
            warnings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: CommandKind,
    pub config: RunConfig,
    pub results: Value,
    pub diagnostics: Diagnostics,
    pub version: String,
}

/// A finished run: the JSON report and the CSV table of its main columns.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub csv: String,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        if self.report.diagnostics.clean {
            0
        } else {
            2
        }
    }

    pub fn render(&self) -> Result<String> {
        match self.report.config.format {
            Format::Json => serde_json::to_string_pretty(&self.report)
                .map(|s| s + "\n")
                .map_err(|e| Error::Io(e.to_string())),
            Format::Csv => Ok(self.csv.clone()),
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Io(e.to_string()))
}

fn table(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

/// Runs the experiment of a validated configuration.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?
            .install(|| dispatch(cfg)),
        None => dispatch(cfg),
    }
}

fn dispatch(cfg: &RunConfig) -> Result<RunOutput> {
    let spec = cfg.spec()?;
    let (results, csv, evaluations, flagged) = match cfg.command {
        CommandKind::Simulate => {
            let orbits = match cfg.x0 {
                Some(x0) => vec![orbit(x0, cfg.n, MapKind::Phi)?],
                None => simulate_orbits(&OrbitConfig::new(cfg.seed, cfg.n, cfg.trials))?,
            };
            let csv = table(
                "trial,step,x",
                orbits
                    .iter()
                    .enumerate()
                    .flat_map(|(i, o)| o.iter().enumerate().map(move |(j, x)| format!("{i},{j},{x}"))),
            );
            (json!({ "orbits": orbits }), csv, 0, 0)
        }
        CommandKind::Clt => {
            let r = clt_experiment_with(&spec, cfg.n, cfg.trials, cfg.seed, cfg.k_max)?;
            let csv = table("normalized_sn", r.normalized.iter().map(|v| v.to_string()));
            (to_value(&r)?, csv, r.evaluations, r.flagged)
        }
        CommandKind::Sigma2 => {
            let r = sigma2_series(&spec, cfg.k_max, cfg.n, cfg.seed)?;
            let c = &r.covariance;
            let csv = table("k,cov,se", (0..c.cov.len()).map(|k| format!("{k},{},{}", c.cov[k], c.se[k])));
            let (e, f) = (c.evaluations, c.flagged);
            (to_value(&r)?, csv, e, f)
        }
        CommandKind::Decay => {
            let r = correlation_decay(&spec, cfg.k_max, cfg.n, cfg.seed)?;
            let csv = table("k,cov,se", (0..r.cov.len()).map(|k| format!("{k},{},{}", r.cov[k], r.se[k])));
            let (e, f) = (r.evaluations, r.flagged);
            (to_value(&r)?, csv, e, f)
        }
        CommandKind::StrongLaw => {
            let r = strong_law_check(&spec, cfg.n, cfg.trials, cfg.seed)?;
            let csv = table(
                "quantity,value",
                [
                    format!("birkhoff_mean,{}", r.birkhoff_mean),
                    format!("birkhoff_se,{}", r.birkhoff_se),
                    format!("quadrature_mean,{}", r.quadrature_mean),
                    format!("quadrature_error,{}", r.quadrature_error),
                    format!("z,{}", r.z),
                ],
            );
            let (e, f) = (r.evaluations, r.flagged);
            (to_value(&r)?, csv, e, f)
        }
        CommandKind::Coboundary => {
            let cycle = parse_cycle(cfg.cycle.as_deref().unwrap_or_default())?;
            let r = coboundary_cycle_sum(&spec, &cycle)?;
            let csv = table(
                "point,term",
                cycle.points.iter().zip(&r.terms).map(|(p, t)| format!("{p},{t}")),
            );
            let e = r.terms.len() as u64;
            (to_value(&r)?, csv, e, 0)
        }
        CommandKind::Spectrum => {
            let p = ulam_matrix(cfg.m)?;
            let r = spectrum(&p, 10_000)?;
            let defect = p.power_uniformity_defect(cfg.m);
            let csv = table("index,modulus", r.moduli.iter().enumerate().map(|(i, m)| format!("{i},{m}")));
            let mut v = to_value(&r)?;
            v["power_uniformity_defect"] = json!(defect);
            (v, csv, 0, 0)
        }
        CommandKind::Seminorm => {
            let (a, b) = cfg.alpha_beta(&spec);
            let f = tilde_fn(&spec);
            let sc = SeminormConfig::default();
            let est = seminorm_estimate(&f, a, b, &sc)?;
            let contraction = if est.diverges {
                None
            } else {
                Some(seminorm_contraction_check(&f, a, b, &sc)?)
            };
            let csv = table(
                "epsilon,value",
                est.epsilon_schedule.iter().zip(&est.per_epsilon).map(|(e, v)| format!("{e},{v}")),
            );
            let v = json!({
                "seminorm": to_value(&est)?,
                "contraction": match &contraction {
                    Some(c) => json!({
                        "factor": c.factor,
                        "lhs": c.lhs,
                        "rhs": c.rhs,
                        "worst_ratio": c.worst_ratio,
                        "pass": c.pass,
                    }),
                    None => Value::Null,
                },
            });
            (v, csv, 0, 0)
        }
        CommandKind::Growth => {
            let grid = geometric_grid(1e2, 1e6, cfg.n);
            let check = growth_check(&spec, &grid)?;
            let mut csv = String::from("series,exponent,constant\n");
            let mut v = json!({ "t_grid": grid, "observable": to_value(&check)? });
            let _ = writeln!(csv, "observable,{},{}", check.value_fit.exponent, check.value_fit.constant);
            let _ = writeln!(
                csv,
                "observable_derivative,{},{}",
                check.derivative_fit.exponent, check.derivative_fit.constant
            );
            if let Some(s) = spec.s {
                let zc = ZetaConfig::for_height(1e6);
                let z0 = growth_exponent_fit(s, &grid, 0, &zc)?;
                let z1 = growth_exponent_fit(s, &grid, 1, &zc)?;
                let _ = writeln!(csv, "zeta,{},{}", z0.exponent, z0.constant);
                let _ = writeln!(csv, "zeta_derivative,{},{}", z1.exponent, z1.constant);
                v["zeta"] = to_value(&z0)?;
                v["zeta_derivative"] = to_value(&z1)?;
            }
            (v, csv, 0, 0)
        }
    };
    let mut results = results;
    if results.is_object() && results.get("observable").is_none() {
        results["observable"] = to_value(&spec)?;
    }
    Ok(RunOutput {
        report: Report {
            command: cfg.command,
            config: cfg.clone(),
            results,
            diagnostics: Diagnostics::new(evaluations, flagged, cfg.warnings.clone()),
            version: VERSION.to_string(),
        },
        csv,
    })
}

/// Parses, runs and writes the report; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match parse_config(args) {
        Ok(c) => c,
        Err(CliError::Clap(e)) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{rendered}")
            } else {
                write!(stderr, "{rendered}")
            };
            return code;
        }
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            return 1;
        }
    };
    for w in &cfg.warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
    let out = match execute(&cfg).and_then(|o| o.render().map(|r| (o, r))) {
        Ok(x) => x,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return 1;
        }
    };
    let (output, text) = out;
    let written = match &cfg.output {
        Some(p) => std::fs::write(p, text.as_bytes()).map_err(|e| format!("{}: {e}", p.display())),
        None => stdout.write_all(text.as_bytes()).map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        let _ = writeln!(stderr, "error: {e}");
        return 1;
    }
    let code = output.exit_code();
    if code == 2 {
        let d = &output.report.diagnostics;
        let _ = writeln!(
            stderr,
            "warning: {} of {} zeta evaluations were degraded ({:.3}%), above the {}% budget",
            d.flagged,
            d.evaluations,
            100.0 * d.flagged_fraction,
            100.0 * FLAG_BUDGET
        );
    }
    code
}
