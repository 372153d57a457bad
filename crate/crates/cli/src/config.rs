//! Command-line flags, config files and their resolution.
//!
//! Every setting resolves as flag, then `EXGAME_*` environment variable, then
//! the JSON config file given by `--config`, then the built-in default.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use execution_game::equilibrium::{SolverOptions, StepSchedule};
use execution_game::model::ModelParams;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "exgame",
    version,
    about = "Equilibrium solver and simulator for the trader-vs-arbitrageur liquidation game"
)]
pub struct Cli {
    /// JSON config file; unknown keys are rejected
    #[arg(long, global = true, env = "EXGAME_CONFIG")]
    pub config: Option<PathBuf>,

    /// Worker threads for sweeps and simulation; 0 uses every core [default: 0]
    #[arg(long, global = true, env = "EXGAME_JOBS")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one equilibrium and write it as JSON
    Solve(SolveArgs),
    /// Benchmark policies over a grid of relative volumes
    Sweep(SweepArgs),
    /// Simulate sample paths
    Simulate(SimulateArgs),
    /// Print profit metrics of every policy at one relative volume
    Bench(BenchArgs),
    /// Write deterministic and noise-driven components of a policy
    Decompose(DecomposeArgs),
    /// Write empirical profit distributions
    Cdf(CdfArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Number of trading periods, at least 2 [default: 20]
    #[arg(long = "T", env = "EXGAME_T")]
    pub horizon: Option<usize>,
    /// Relative volume lambda*sigma0/sigma_eps [default: 8]
    #[arg(long, env = "EXGAME_RHO0")]
    pub rho0: Option<f64>,
    /// Prior std of the trader's position in shares; replaces --rho0
    #[arg(long, env = "EXGAME_SIGMA0")]
    pub sigma0: Option<f64>,
    /// Price impact per share [default: 1]
    #[arg(long, env = "EXGAME_LAMBDA")]
    pub lambda: Option<f64>,
    /// Per-period price noise volatility [default: 1]
    #[arg(long, env = "EXGAME_SIGMA_EPS")]
    pub sigma_eps: Option<f64>,
    /// Periods the arbitrageur trades after the deadline [default: 1]
    #[arg(long, env = "EXGAME_ARB_EXTRA_PERIODS")]
    pub arb_extra_periods: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Constant,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FixedPoint,
    Bisection,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    /// Fixed-point tolerance on the relative spread residual [default: 1e-10]
    #[arg(long, env = "EXGAME_TOL")]
    pub tol: Option<f64>,
    /// Iteration cap [default: 500]
    #[arg(long, env = "EXGAME_MAX_ITERS")]
    pub max_iters: Option<usize>,
    /// Damping schedule [default: constant]
    #[arg(long, value_enum, env = "EXGAME_STEP")]
    pub step: Option<StepKind>,
    /// Weight kept on the previous guess, in [0, 1) [default: 0.5]
    #[arg(long, env = "EXGAME_GAMMA")]
    pub gamma: Option<f64>,
    /// Solution method; bisection is a small-volume cross-check [default: fixed-point]
    #[arg(long, value_enum, env = "EXGAME_METHOD")]
    pub method: Option<Method>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    Pbe,
    Eq,
    Mr,
    Vt,
    /// Equipartition with no arbitrageur
    #[value(name = "eq_alone")]
    EqAlone,
}

impl PolicyName {
    pub fn label(&self) -> &'static str {
        match self {
            PolicyName::Pbe => "pbe",
            PolicyName::Eq => "eq",
            PolicyName::Mr => "mr",
            PolicyName::Vt => "vt",
            PolicyName::EqAlone => "eq_alone",
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output file; stdout when absent
    #[arg(long, env = "EXGAME_OUT")]
    pub out: Option<PathBuf>,
    /// Accepted for scripting symmetry; solving draws no random numbers
    #[arg(long)]
    pub seedless: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Relative-volume grid as log:<lo>:<hi>:<n> [default: log:1e-2:1e3:40]
    #[arg(long, env = "EXGAME_GRID")]
    pub grid: Option<String>,
    /// Comma-separated policies [default: pbe,eq,mr,vt,eq_alone]
    #[arg(long, value_enum, value_delimiter = ',', env = "EXGAME_POLICIES")]
    pub policies: Option<Vec<PolicyName>>,
    /// Directory for profits.csv, variance.csv and uncertainty.csv [default: .]
    #[arg(long, env = "EXGAME_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Trader policy; the arbitrageur best-responds [default: pbe]
    #[arg(long, value_enum, env = "EXGAME_POLICY")]
    pub policy: Option<PolicyName>,
    /// Number of paths [default: 3]
    #[arg(long, env = "EXGAME_PATHS")]
    pub paths: Option<usize>,
    /// Random seed [default: 42]
    #[arg(long, env = "EXGAME_SEED")]
    pub seed: Option<u64>,
    /// Fixed initial position in shares; drawn from the prior when absent
    #[arg(long, env = "EXGAME_X0")]
    pub x0: Option<f64>,
    /// Pair each path with its negated-noise twin
    #[arg(long, env = "EXGAME_ANTITHETIC")]
    pub antithetic: bool,
    /// Output CSV; stdout when absent
    #[arg(long, env = "EXGAME_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output JSON; stdout when absent
    #[arg(long, env = "EXGAME_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Trader policy [default: pbe]
    #[arg(long, value_enum, env = "EXGAME_POLICY")]
    pub policy: Option<PolicyName>,
    /// Output CSV; stdout when absent
    #[arg(long, env = "EXGAME_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CdfArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Comma-separated policies [default: pbe,eq,mr]
    #[arg(long, value_enum, value_delimiter = ',', env = "EXGAME_POLICIES")]
    pub policies: Option<Vec<PolicyName>>,
    /// Paths per policy [default: 100000]
    #[arg(long, env = "EXGAME_PATHS")]
    pub paths: Option<usize>,
    /// Random seed [default: 42]
    #[arg(long, env = "EXGAME_SEED")]
    pub seed: Option<u64>,
    /// Output CSV; stdout when absent
    #[arg(long, env = "EXGAME_OUT")]
    pub out: Option<PathBuf>,
}

/// Config-file layer. Keys mirror the long flag names.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "T")]
    pub horizon: Option<usize>,
    pub rho0: Option<f64>,
    pub sigma0: Option<f64>,
    pub lambda: Option<f64>,
    pub sigma_eps: Option<f64>,
    pub arb_extra_periods: Option<usize>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub step: Option<StepKind>,
    pub gamma: Option<f64>,
    pub method: Option<Method>,
    pub grid: Option<String>,
    pub policies: Option<Vec<PolicyName>>,
    pub policy: Option<PolicyName>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub x0: Option<f64>,
    pub antithetic: Option<bool>,
    pub out: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }
}

pub const DEFAULT_T: usize = 20;
pub const DEFAULT_RHO0: f64 = 8.0;
pub const DEFAULT_GRID: &str = "log:1e-2:1e3:40";
pub const DEFAULT_SEED: u64 = 42;

pub fn resolve_model(args: &ModelArgs, file: &RunConfig) -> Result<ModelParams, CliError> {
    let horizon = args.horizon.or(file.horizon).unwrap_or(DEFAULT_T);
    let lambda = args.lambda.or(file.lambda).unwrap_or(1.0);
    let sigma_eps = args.sigma_eps.or(file.sigma_eps).unwrap_or(1.0);
    let extra = args.arb_extra_periods.or(file.arb_extra_periods).unwrap_or(1);
    let rho0 = args.rho0.or(file.rho0);
    let sigma0 = args.sigma0.or(file.sigma0);
    let params = match (rho0, sigma0) {
        (Some(_), Some(_)) => {
            return Err(CliError::Validation("give either rho0 or sigma0, not both".into()));
        }
        (_, Some(s0)) => ModelParams::with_sigma0(horizon, lambda, sigma_eps, s0),
        (r, None) => ModelParams::new(horizon, lambda, sigma_eps, r.unwrap_or(DEFAULT_RHO0)),
    };
    params
        .and_then(|p| p.with_arb_extra_periods(extra))
        .map_err(|e| CliError::Validation(e.to_string()))
}

pub fn resolve_solver(args: &SolverArgs, file: &RunConfig) -> Result<(SolverOptions, Method), CliError> {
    let gamma = args.gamma.or(file.gamma).unwrap_or(0.5);
    let step = match args.step.or(file.step).unwrap_or(StepKind::Constant) {
        StepKind::Constant => StepSchedule::Constant { gamma },
        StepKind::Adaptive => StepSchedule::Adaptive {
            gamma,
            ceiling: 0.9,
            factor: 0.5,
        },
    };
    let opts = SolverOptions {
        tol: args.tol.or(file.tol).unwrap_or(1e-10),
        max_iters: args.max_iters.or(file.max_iters).unwrap_or(500),
        step,
    };
    opts.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok((opts, args.method.or(file.method).unwrap_or(Method::FixedPoint)))
}

/// Parses `log:<lo>:<hi>:<n>` into `n` log-spaced points, endpoints included.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Validation(format!("grid must look like log:<lo>:<hi>:<n>, got {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 4 || parts[0] != "log" {
        return Err(bad());
    }
    let lo: f64 = parts[1].parse().map_err(|_| bad())?;
    let hi: f64 = parts[2].parse().map_err(|_| bad())?;
    let n: usize = parts[3].parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) || n == 0 {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64),
        })
        .collect())
}
