//! Command-line front end.
//!
//! Exit codes: 0 success, 1 input error, 2 mathematical failure (failed
//! validation, no certified equilibrium).

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::closed_form::Side;
use crate::error::GameError;
use crate::params::{validate, ModelParams};
use crate::simulate::{
    estimate_controller_reward, estimate_stopper_reward, nash_gap, DeviationFamilies, McEstimate, SimConfig,
    StrategyProfile, ThetaMode,
};
use crate::solver::{solve_equilibrium, EquilibriumCertificate, SolverOpts};

pub const SEED_ENV: &str = "GHOSTGAME_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_MATH: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SweepParameter {
    LambdaHi,
    LambdaLo,
    C,
    R,
}

impl SweepParameter {
    fn set(self, params: &mut ModelParams, value: f64) {
        match self {
            SweepParameter::LambdaHi => params.lambda_hi = value,
            SweepParameter::LambdaLo => params.lambda_lo = value,
            SweepParameter::C => params.c = value,
            SweepParameter::R => params.r = value,
        }
    }

    fn name(self) -> &'static str {
        match self {
            SweepParameter::LambdaHi => "lambda_hi",
            SweepParameter::LambdaLo => "lambda_lo",
            SweepParameter::C => "c",
            SweepParameter::R => "r",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub lo: f64,
    pub hi: f64,
    /// Number of grid points, endpoints included.
    pub steps: usize,
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        match self.steps {
            0 => vec![],
            1 => vec![self.lo],
            n => (0..n)
                .map(|i| if i + 1 == n { self.hi } else { self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64 })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: ModelParams,
    #[serde(default)]
    pub solver: SolverOpts,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { params: ModelParams::reference(), solver: SolverOpts::default(), sim: SimConfig::default(), sweep: None }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "ghostgame", version, about = "Threshold equilibria of a stopper vs. hidden-type controller game")]
pub struct Cli {
    /// TOML run configuration; the reference parameters are used if absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the result here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub lambda_hi: Option<f64>,
    #[arg(long, global = true)]
    pub lambda_lo: Option<f64>,
    #[arg(long, global = true)]
    pub c: Option<f64>,
    #[arg(long, global = true)]
    pub r: Option<f64>,
    /// Takes precedence over GHOSTGAME_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub n_paths: Option<usize>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true)]
    pub p0: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the parameter conditions.
    Check,
    /// Solve for and certify the equilibrium thresholds.
    Solve,
    /// Tabulate the value functions at the equilibrium (CSV).
    Curve {
        #[arg(long, default_value_t = 1001)]
        n_points: usize,
    },
    /// Monte Carlo rewards at the equilibrium.
    Simulate,
    /// Deviation gains for both players at the equilibrium.
    NashGap,
    /// Re-solve over a parameter grid (CSV).
    Sweep {
        #[arg(long)]
        parameter: Option<SweepParameter>,
        #[arg(long)]
        lo: Option<f64>,
        #[arg(long)]
        hi: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }

    fn math(message: impl Into<String>) -> Self {
        Self { code: EXIT_MATH, message: message.into() }
    }
}

impl From<GameError> for Failure {
    fn from(e: GameError) -> Self {
        match e {
            GameError::Config(_) => Failure::input(e.to_string()),
            _ => Failure::math(e.to_string()),
        }
    }
}

/// Output of a command: text for stdout and the exit code.
struct Report {
    body: String,
    code: i32,
}

pub fn run_from_env() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(
        std::env::args_os(),
        std::env::var(SEED_ENV).ok(),
        &mut stdout.lock(),
        &mut stderr.lock(),
    )
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. `env_seed` is the value of `GHOSTGAME_SEED`.
pub fn run<I, T>(args: I, env_seed: Option<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    match execute(&cli, env_seed, err) {
        Ok(report) => {
            let written = match &cli.output {
                Some(path) => std::fs::write(path, &report.body).map_err(|e| e.to_string()),
                None => out.write_all(report.body.as_bytes()).map_err(|e| e.to_string()),
            };
            if let Err(e) = written {
                let _ = writeln!(err, "error: cannot write output: {e}");
                return EXIT_INPUT;
            }
            report.code
        }
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn load_config(cli: &Cli, env_seed: Option<String>) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_toml(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = env_seed {
        cfg.sim.seed = s
            .trim()
            .parse()
            .map_err(|_| Failure::input(format!("{SEED_ENV} must be an unsigned integer, got {s:?}")))?;
    }
    let o = &cli.overrides;
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut cfg.params.lambda_hi, o.lambda_hi);
    set(&mut cfg.params.lambda_lo, o.lambda_lo);
    set(&mut cfg.params.c, o.c);
    set(&mut cfg.params.r, o.r);
    set(&mut cfg.sim.dt, o.dt);
    set(&mut cfg.sim.horizon, o.horizon);
    set(&mut cfg.sim.p0, o.p0);
    if let Some(seed) = o.seed {
        cfg.sim.seed = seed;
    }
    if let Some(n) = o.n_paths {
        cfg.sim.n_paths = n;
    }
    Ok(cfg)
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("records serialize");
    s.push('\n');
    s
}

fn execute(cli: &Cli, env_seed: Option<String>, err: &mut dyn Write) -> Result<Report, Failure> {
    let cfg = load_config(cli, env_seed)?;
    match &cli.command {
        Command::Check => cmd_check(&cfg),
        Command::Solve => cmd_solve(&cfg, err),
        Command::Curve { n_points } => cmd_curve(&cfg, *n_points, err),
        Command::Simulate => cmd_simulate(&cfg, err),
        Command::NashGap => cmd_nash_gap(&cfg, err),
        Command::Sweep { parameter, lo, hi, steps } => {
            let spec = match (cfg.sweep, parameter) {
                (_, Some(p)) => SweepSpec {
                    parameter: *p,
                    lo: lo.ok_or_else(|| Failure::input("--lo is required with --parameter"))?,
                    hi: hi.ok_or_else(|| Failure::input("--hi is required with --parameter"))?,
                    steps: steps.ok_or_else(|| Failure::input("--steps is required with --parameter"))?,
                },
                (Some(mut s), None) => {
                    s.lo = lo.unwrap_or(s.lo);
                    s.hi = hi.unwrap_or(s.hi);
                    s.steps = steps.unwrap_or(s.steps);
                    s
                }
                (None, None) => return Err(Failure::input("sweep needs a [sweep] table or --parameter")),
            };
            cmd_sweep(&cfg, &spec)
        }
    }
}

fn cmd_check(cfg: &RunConfig) -> Result<Report, Failure> {
    let report = validate(&cfg.params);
    let code = if report.all_ok() { EXIT_OK } else { EXIT_MATH };
    Ok(Report { body: json(&report), code })
}

fn warn_if_invalid(cfg: &RunConfig, err: &mut dyn Write) {
    let report = validate(&cfg.params);
    if !report.all_ok() {
        let failed: Vec<&str> = report.margins.iter().filter(|m| !m.holds()).map(|m| m.name.as_str()).collect();
        let _ = writeln!(
            err,
            "warning: parameter conditions fail ({}); searching anyway, results are best effort",
            failed.join(", ")
        );
    }
}

/// Solves, reporting the scan table on stdout when no root pair exists.
fn solve(cfg: &RunConfig, err: &mut dyn Write) -> Result<EquilibriumCertificate, Report> {
    warn_if_invalid(cfg, err);
    match solve_equilibrium(&cfg.params, &cfg.solver) {
        Ok(cert) => Ok(cert),
        Err(GameError::NoEquilibriumFound { scan }) => {
            let _ = writeln!(err, "error: no sign change of the smooth-fit residual over the b1 scan");
            Err(Report { body: json(&serde_json::json!({ "error": "no_equilibrium_found", "scan": scan })), code: EXIT_MATH })
        }
        Err(e) => {
            let f = Failure::from(e);
            let _ = writeln!(err, "error: {}", f.message);
            Err(Report { body: String::new(), code: f.code })
        }
    }
}

fn require_certified(cert: &EquilibriumCertificate, err: &mut dyn Write) -> Result<(), Failure> {
    if cert.certified {
        Ok(())
    } else {
        let _ = writeln!(err, "{}", json(cert));
        Err(Failure::math("the located threshold pair fails the equilibrium conditions"))
    }
}

fn cmd_solve(cfg: &RunConfig, err: &mut dyn Write) -> Result<Report, Failure> {
    let cert = match solve(cfg, err) {
        Ok(cert) => cert,
        Err(report) => return Ok(report),
    };
    let code = if cert.certified { EXIT_OK } else { EXIT_MATH };
    Ok(Report { body: json(&cert), code })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn cmd_curve(cfg: &RunConfig, n_points: usize, err: &mut dyn Write) -> Result<Report, Failure> {
    if n_points < 2 {
        return Err(Failure::input("--n-points must be at least 2"));
    }
    let cert = match solve(cfg, err) {
        Ok(cert) => cert,
        Err(report) => return Ok(report),
    };
    require_certified(&cert, err)?;
    let curves = cert.curves(&cfg.params)?;
    let (b1, b2) = (cert.b1_star, cert.b2_star);
    let mut body = String::from("p,u,v,u_p,v_p,lambda_star\n");
    for i in 0..n_points {
        let p = if i + 1 == n_points { 1.0 } else { i as f64 / (n_points - 1) as f64 };
        let at_kink = p == b1 || p == b2;
        let (u_p, v_p) = if at_kink {
            (None, None)
        } else {
            (Some(curves.u_prime(p, Side::Right)?), Some(curves.v_prime(p, Side::Right)?))
        };
        body.push_str(&format!(
            "{p},{},{},{},{},{}\n",
            curves.u(p)?,
            curves.v(p)?,
            fmt_opt(u_p),
            fmt_opt(v_p),
            curves.lambda_star(p)
        ));
    }
    Ok(Report { body, code: EXIT_OK })
}

#[derive(Serialize)]
struct SimulateRecord {
    b1_star: f64,
    b2_star: f64,
    p0: f64,
    stopper: McEstimate,
    controller: McEstimate,
    closed_form_u: f64,
    closed_form_v: f64,
}

fn cmd_simulate(cfg: &RunConfig, err: &mut dyn Write) -> Result<Report, Failure> {
    cfg.sim.validate()?;
    let cert = match solve(cfg, err) {
        Ok(cert) => cert,
        Err(report) => return Ok(report),
    };
    require_certified(&cert, err)?;
    let profile = StrategyProfile::thresholds(cert.b1_star, cert.b2_star);
    let stopper = estimate_stopper_reward(
        &cfg.params,
        &profile,
        &SimConfig { theta_mode: ThetaMode::Bernoulli, ..cfg.sim },
    )?;
    let controller = estimate_controller_reward(
        &cfg.params,
        &profile,
        &profile.control_policy,
        &SimConfig { theta_mode: ThetaMode::FixedOne, ..cfg.sim },
    )?;
    let curves = cert.curves(&cfg.params)?;
    let record = SimulateRecord {
        b1_star: cert.b1_star,
        b2_star: cert.b2_star,
        p0: cfg.sim.p0,
        closed_form_u: curves.u(cfg.sim.p0)?,
        closed_form_v: curves.v(cfg.sim.p0)?,
        stopper,
        controller,
    };
    Ok(Report { body: json(&record), code: EXIT_OK })
}

fn cmd_nash_gap(cfg: &RunConfig, err: &mut dyn Write) -> Result<Report, Failure> {
    cfg.sim.validate()?;
    let cert = match solve(cfg, err) {
        Ok(cert) => cert,
        Err(report) => return Ok(report),
    };
    require_certified(&cert, err)?;
    let report = nash_gap(&cfg.params, &cert, &DeviationFamilies::default(), &cfg.sim)?;
    Ok(Report { body: json(&report), code: EXIT_OK })
}

fn cmd_sweep(cfg: &RunConfig, spec: &SweepSpec) -> Result<Report, Failure> {
    if spec.steps == 0 || !spec.lo.is_finite() || !spec.hi.is_finite() {
        return Err(Failure::input("sweep needs finite bounds and at least one step"));
    }
    let mut body = String::from("parameter,value,b1_star,b2_star,certified,error\n");
    let mut any_ok = false;
    for value in spec.values() {
        let mut params = cfg.params;
        spec.parameter.set(&mut params, value);
        let row = match solve_equilibrium(&params, &cfg.solver) {
            Ok(cert) => {
                any_ok = true;
                format!("{},{value},{},{},{},", spec.parameter.name(), cert.b1_star, cert.b2_star, cert.certified)
            }
            Err(e) => {
                let msg = e.to_string().replace(['"', ','], ";");
                format!("{},{value},,,false,\"{msg}\"", spec.parameter.name())
            }
        };
        body.push_str(&row);
        body.push('\n');
    }
    Ok(Report { body, code: if any_ok { EXIT_OK } else { EXIT_MATH } })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_grid_hits_both_ends() {
        let s = SweepSpec { parameter: SweepParameter::LambdaHi, lo: 1.45, hi: 2.2, steps: 16 };
        let v = s.values();
        assert_eq!(v.len(), 16);
        assert_eq!(v[0], 1.45);
        assert_eq!(v[15], 2.2);
        assert!((v[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn config_requires_params_and_rejects_unknown_keys() {
        let ok = "[params]\nlambda_hi = 2.2\nlambda_lo = 1.4\nc = 1.0\nr = 0.2\n";
        assert_eq!(RunConfig::from_toml(ok).unwrap().params, ModelParams::reference());
        assert!(RunConfig::from_toml("[params]\nlambda_hi = 2.2\nlambda_lo = 1.4\nc = 1.0\n").is_err());
        assert!(RunConfig::from_toml(&format!("{ok}[solver]\nbogus = 1\n")).is_err());
        assert!(RunConfig::from_toml(&format!("{ok}extra = 1\n")).is_err());
    }

    #[test]
    fn sweep_table_parses() {
        let text = "[params]\nlambda_hi = 2.2\nlambda_lo = 1.4\nc = 1.0\nr = 0.2\n\
                    [sweep]\nparameter = \"lambda_hi\"\nlo = 1.5\nhi = 2.0\nsteps = 3\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.sweep.unwrap().parameter, SweepParameter::LambdaHi);
    }
}
