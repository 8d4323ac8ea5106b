//! Command-line driver for the experiments and the coefficient checks.
//!
//! Exit codes are fixed for scripting: 0 success, 1 a check failed, 2 usage
//! or configuration error, 3 a trajectory diverged.

pub mod checks;
pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rklmc::experiments::BlrParams;
use rklmc::rng::{derive_stream, StreamKey};
use rklmc::{
    check_order_conditions, compute_kappa1, convergence_experiment, dimension_experiment, eight_mode_experiment,
    histogram_experiment, stepsize_bound, ExperimentError, ExperimentReport, ModelKind, RkCoefficients,
    StepsizeConstants,
};
use thiserror::Error;

use crate::config::{Plan, RunConfig};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "RKLMC_OUTPUT_DIR";
/// Output directory used when neither the flag, the config nor the
/// environment names one.
pub const DEFAULT_OUTPUT_DIR: &str = "rklmc-output";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    CheckFailed(String),
    #[error("{0}")]
    Divergence(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Divergence(_) => 3,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match &e {
            ExperimentError::Simulation(s) if s.is_divergence() => CliError::Divergence(e.to_string()),
            ExperimentError::Io(_) => CliError::Usage(format!("cannot write output: {e}")),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rklmc", version, about = "Runge-Kutta Langevin Monte Carlo experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the order conditions of a coefficient set.
    CheckOrder(CheckOrderArgs),
    /// Run an experiment described by a config file.
    Run(RunArgs),
    /// Run the fast invariant suite.
    Selftest(SelftestArgs),
    /// Largest step size covered by the error bound.
    StepsizeBound(StepsizeArgs),
    /// Compare a model's derivative oracles with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct CoefficientArgs {
    /// Published preset: rklmc-2g, rklmc-3g-a or rklmc-3g-b.
    #[arg(long, conflicts_with = "coefficients")]
    pub preset: Option<String>,
    /// Coefficients as key=value (alpha, beta, a11, a21, a22, b1, b2).
    pub coefficients: Vec<String>,
}

impl CoefficientArgs {
    fn resolve(&self) -> Result<RkCoefficients, CliError> {
        match (&self.preset, self.coefficients.is_empty()) {
            (Some(p), _) => p
                .parse::<rklmc::schemes::Preset>()
                .map(|p| p.coefficients())
                .map_err(|e| CliError::Usage(e.to_string())),
            (None, false) => self
                .coefficients
                .join(" ")
                .parse()
                .map_err(|e: rklmc::schemes::SchemeError| CliError::Usage(e.to_string())),
            (None, true) => Err(CliError::Usage("give --preset or key=value coefficients".into())),
        }
    }
}

#[derive(Debug, Args)]
pub struct ConstantArgs {
    /// Dissipativity constant μ.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Dissipativity constant μ'.
    #[arg(long = "mu-prime")]
    pub mu_prime: Option<f64>,
    /// Gradient Lipschitz constant L₁.
    #[arg(long)]
    pub l1: Option<f64>,
    /// Constant L₁'.
    #[arg(long = "l1-prime")]
    pub l1_prime: Option<f64>,
}

impl ConstantArgs {
    fn resolve(&self) -> Result<Option<StepsizeConstants>, CliError> {
        match (self.mu, self.mu_prime, self.l1, self.l1_prime) {
            (None, None, None, None) => Ok(None),
            (Some(mu), Some(mu_prime), Some(l1), Some(l1_prime)) => Ok(Some(StepsizeConstants {
                mu,
                mu_prime,
                l1,
                l1_prime,
            })),
            _ => Err(CliError::Usage("the bound needs all of --mu, --mu-prime, --l1 and --l1-prime".into())),
        }
    }
}

#[derive(Debug, Args)]
pub struct CheckOrderArgs {
    #[command(flatten)]
    pub coefficients: CoefficientArgs,
    #[command(flatten)]
    pub constants: ConstantArgs,
}

#[derive(Debug, Args)]
pub struct StepsizeArgs {
    #[command(flatten)]
    pub coefficients: CoefficientArgs,
    #[command(flatten)]
    pub constants: ConstantArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config file.
    pub config: PathBuf,
    /// Use the full-size defaults (larger ensembles, finer reference grids).
    #[arg(long)]
    pub paper_scale: bool,
    /// Cap on worker threads; results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory; overrides the config and the environment.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    /// Shift every preset coefficient by this amount, to exercise the
    /// failure path.
    #[arg(long, hide = true, default_value_t = 0.0)]
    pub perturb_presets: f64,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// two-mode-gmm, blr or eight-mode-gmm.
    #[arg(long, default_value = "two-mode-gmm")]
    pub model: String,
    /// Dimension (ignored by the planar mixture).
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    /// Number of random probe points.
    #[arg(long, default_value_t = 50)]
    pub probes: usize,
    /// Seed for the probe points.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Executes `cli`, writing human-readable output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::CheckOrder(a) => check_order(&a, out),
        Command::Run(a) => run_experiment(&a, out),
        Command::Selftest(a) => selftest(&a, out),
        Command::StepsizeBound(a) => stepsize(&a, out),
        Command::Gradcheck(a) => gradcheck(&a, out),
    }
}

fn check_order(a: &CheckOrderArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let c = a.coefficients.resolve()?;
    let constants = a.constants.resolve()?;
    let r = check_order_conditions(&c);
    writeln!(out, "r1 {}", r.r1)?;
    writeln!(out, "r2 {}", r.r2)?;
    writeln!(out, "r3 {}", r.r3)?;
    writeln!(out, "kappa1 {}", compute_kappa1(&c))?;
    if let Some(k) = constants {
        let bound = stepsize_bound(&c, &k).map_err(|e| CliError::Usage(e.to_string()))?;
        writeln!(out, "stepsize_bound {bound}")?;
    }
    if c.is_admissible() {
        writeln!(out, "admissible")?;
        Ok(())
    } else {
        writeln!(out, "not admissible")?;
        Err(CliError::CheckFailed(format!(
            "order conditions violated (max |residual| = {:.3e})",
            r.max_abs()
        )))
    }
}

fn stepsize(a: &StepsizeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let c = a.coefficients.resolve()?;
    let k = a
        .constants
        .resolve()?
        .ok_or_else(|| CliError::Usage("give --mu, --mu-prime, --l1 and --l1-prime".into()))?;
    let bound = stepsize_bound(&c, &k).map_err(|e| CliError::Usage(e.to_string()))?;
    writeln!(out, "kappa1 {}", compute_kappa1(&c))?;
    writeln!(out, "stepsize_bound {bound}")?;
    Ok(())
}

/// `--out`, then the config's `output_dir`, then the environment variable,
/// then [`DEFAULT_OUTPUT_DIR`].
pub fn output_dir(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    flag.or(config)
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

/// Runs a resolved plan.
pub fn execute(plan: &Plan) -> Result<ExperimentReport, ExperimentError> {
    Ok(match plan {
        Plan::Convergence(c) => ExperimentReport::Convergence(convergence_experiment(c)?),
        Plan::Dimension(c) => ExperimentReport::Dimension(dimension_experiment(c)?),
        Plan::Histogram(c) => ExperimentReport::Histogram(histogram_experiment(c)?),
        Plan::EightMode(c) => ExperimentReport::EightMode(eight_mode_experiment(c)?),
    })
}

fn run_experiment(a: &RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", a.config.display())))?;
    let cfg: RunConfig = text
        .parse()
        .map_err(|e| CliError::Usage(format!("{}: {e}", a.config.display())))?;
    if a.workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let plan = cfg
        .resolve(a.paper_scale, a.workers)
        .map_err(|e| CliError::Usage(format!("{}: {e}", a.config.display())))?;
    if a.paper_scale {
        log::warn!("paper-scale defaults selected; expect a much longer runtime");
        eprintln!("warning: --paper-scale uses full-size ensembles and reference grids; this can take hours");
    }
    let dir = output_dir(a.out.as_deref(), cfg.output_dir.as_deref());
    let start = Instant::now();
    let report = execute(&plan)?;
    let written = report.write_to_dir(&dir)?;
    write!(out, "{}", report.summary())?;
    for p in written {
        writeln!(out, "wrote {}", p.display())?;
    }
    log::info!("{} finished in {:.1}s", cfg.kind.name(), start.elapsed().as_secs_f64());
    Ok(())
}

fn selftest(a: &SelftestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let start = Instant::now();
    let mut results = checks::order_conditions(a.perturb_presets);
    results.push(checks::increment_moments(10_000, 0.5, 1));
    results.push(checks::increment_moments(10_000, 2f64.powi(-6), 2));
    let mut stream = derive_stream(StreamKey::new(3, 0, 0));
    for kind in [
        ModelKind::TwoModeGmm,
        ModelKind::Blr(BlrParams::default()),
        ModelKind::EightModeGmm,
    ] {
        let model = kind.build(10).map_err(|e| CliError::Usage(e.to_string()))?;
        let scale = if matches!(kind, ModelKind::Blr(_)) { 0.5 } else { 2.0 };
        let errs = checks::finite_differences(model.as_ref(), 20, scale, &mut stream);
        results.push(checks::CheckResult {
            name: format!("derivatives {}", model.name()),
            pass: errs.within(1e-5, 1e-3),
            detail: errs.to_string(),
        });
    }
    results.push(checks::quadratic_exactness(100, 4));

    for r in &results {
        writeln!(out, "{}", r.line())?;
    }
    writeln!(out, "selftest finished in {:.2}s", start.elapsed().as_secs_f64())?;
    let failed: Vec<&str> = results.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("failed: {}", failed.join(", "))))
    }
}

fn gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let kind = match a.model.as_str() {
        "two-mode-gmm" => ModelKind::TwoModeGmm,
        "blr" => ModelKind::Blr(BlrParams::default()),
        "eight-mode-gmm" => ModelKind::EightModeGmm,
        other => return Err(CliError::Usage(format!("unknown model `{other}`"))),
    };
    if a.probes == 0 {
        return Err(CliError::Usage("--probes must be at least 1".into()));
    }
    let model = kind.build(a.d).map_err(|e| CliError::Usage(e.to_string()))?;
    let scale = if matches!(kind, ModelKind::Blr(_)) { 0.5 } else { 2.0 };
    let mut stream = derive_stream(StreamKey::new(a.seed, 0, 0));
    let errs = checks::finite_differences(model.as_ref(), a.probes, scale, &mut stream);
    writeln!(out, "{} (d = {}), {} probes: {errs}", model.name(), model.dim(), a.probes)?;
    if errs.within(1e-5, 1e-3) {
        Ok(())
    } else {
        Err(CliError::CheckFailed("finite-difference mismatch".into()))
    }
}
