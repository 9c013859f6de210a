use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use deposition::error::Violations;
use deposition::integrator::Truncation;
use deposition::model::{InitialData, ModelParams};

mod commands;

#[derive(Parser)]
#[command(name = "deposition", version, about = "Submonolayer deposition: kinetics, representation formula and convergence rates")]
struct Cli {
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the truncated cluster hierarchy and write the trajectory CSV.
    #[command(allow_negative_numbers = true)]
    Simulate(SimulateArgs),
    /// Similarity profile on a grid of eta.
    #[command(allow_negative_numbers = true)]
    Profile(ProfileArgs),
    /// Measure convergence rates to the similarity profile.
    #[command(allow_negative_numbers = true)]
    Rate(RateArgs),
    /// Monomer and time-scale expansions against the monomer-bulk system.
    #[command(allow_negative_numbers = true)]
    Monomer(MonomerArgs),
    /// Order of the center-manifold residual.
    #[command(allow_negative_numbers = true)]
    Manifold(ManifoldArgs),
    /// Tabulate an asymptotic expansion on a grid.
    #[command(allow_negative_numbers = true)]
    Asymptotics(AsymptoticsArgs),
    /// Evaluate scaled cluster concentrations at (eta, tau) pairs read from a CSV.
    #[command(allow_negative_numbers = true)]
    Query(QueryArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum InitKind {
    Monomeric,
    Powerlaw,
}

#[derive(Args, Clone, Debug, Serialize)]
struct ModelArgs {
    /// Critical cluster size.
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Deposition rate.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = InitKind::Monomeric)]
    init: InitKind,
    /// Power-law exponent of the initial clusters.
    #[arg(long)]
    mu: Option<f64>,
    /// Power-law amplitude of the initial clusters.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Initial monomer concentration.
    #[arg(long = "c1-0", default_value_t = 0.0)]
    c1_0: f64,
}

impl ModelArgs {
    fn resolve(&self, v: &mut Violations) -> Option<(ModelParams, InitialData)> {
        let params = model_params(v, self.alpha, self.n);
        let init = match (self.init, self.mu) {
            (InitKind::Monomeric, Some(_)) => {
                v.check(false, "--mu only applies to --init powerlaw");
                None
            }
            (InitKind::Monomeric, None) => InitialData::monomeric_with(self.c1_0).map_err(|e| v.check(false, e.to_string())).ok(),
            (InitKind::Powerlaw, None) => {
                v.check(false, "--init powerlaw requires --mu");
                None
            }
            (InitKind::Powerlaw, Some(mu)) => InitialData::power_law_with(self.c1_0, self.rho, mu)
                .map_err(|e| v.check(false, e.to_string()))
                .ok(),
        };
        Some((params?, init?))
    }
}

/// Checks `alpha` and `n` independently so both violations are reported.
fn model_params(v: &mut Violations, alpha: f64, n: usize) -> Option<ModelParams> {
    let before = v.0.len();
    v.check(alpha.is_finite() && alpha > 0.0, format!("--alpha: must be positive, got {alpha}"));
    v.check(n >= 2, format!("--n: must be at least 2, got {n}"));
    if v.0.len() > before {
        return None;
    }
    ModelParams::new(alpha, n).ok()
}

fn parse_truncation(s: &str) -> Result<Truncation, String> {
    if s == "auto" {
        return Ok(Truncation::Auto);
    }
    s.parse::<usize>()
        .map(Truncation::Fixed)
        .map_err(|_| format!("expected `auto` or a positive integer, got `{s}`"))
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    t_end: f64,
    /// Relative integrator tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Largest tracked cluster size: `auto` or an integer.
    #[arg(long, default_value = "auto", value_parser = parse_truncation)]
    truncation: Truncation,
    /// Append the relative mass-balance defect as a column.
    #[arg(long)]
    mass_check: bool,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ProfileArgs {
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Explicit values of eta.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["eta_min", "eta_max"])]
    eta: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    eta_min: f64,
    #[arg(long, default_value_t = 2.0)]
    eta_max: f64,
    #[arg(long, default_value_t = 41)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct RateArgs {
    /// Sweep configuration in TOML; replaces the model and grid flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_delimiter = ',')]
    eta: Vec<f64>,
    #[arg(long, default_value_t = 1e3)]
    tau_min: f64,
    #[arg(long, default_value_t = 1e4)]
    tau_max: f64,
    #[arg(long, default_value_t = 12)]
    points: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    quad_tol: f64,
    #[arg(long, default_value_t = 0.05)]
    eta_guard: f64,
    /// Bundle directory; only the summary is printed when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct MonomerArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1e7)]
    t_end: f64,
    #[arg(long, default_value_t = 1.0)]
    t_min: f64,
    #[arg(long, default_value_t = 36)]
    points: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum SeriesChoice {
    Full,
    DropLast,
    Both,
}

#[derive(Args, Debug, Serialize)]
struct ManifoldArgs {
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = SeriesChoice::Both)]
    series: SeriesChoice,
    #[arg(long, default_value_t = 0.1)]
    x_max: f64,
    #[arg(long, default_value_t = 1e-3)]
    x_min: f64,
    #[arg(long, default_value_t = 40)]
    points: usize,
    /// Also print the residual at every grid point.
    #[arg(long)]
    residuals: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum Oracle {
    Monomer,
    TauOfT,
    TOfTau,
    ScaledMonomer,
    ZetaOfT,
}

#[derive(Args, Debug, Serialize)]
struct AsymptoticsArgs {
    #[arg(long, value_enum)]
    oracle: Oracle,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// First grid value (t or tau, depending on the oracle).
    #[arg(long, default_value_t = 10.0)]
    from: f64,
    #[arg(long, default_value_t = 1e8)]
    to: f64,
    #[arg(long, default_value_t = 29)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct QueryArgs {
    /// CSV with columns `eta,tau`.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    quad_tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .expect("thread pool is configured once");
    }
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Profile(a) => commands::profile(a),
        Command::Rate(a) => commands::rate(a),
        Command::Monomer(a) => commands::monomer(a),
        Command::Manifold(a) => commands::manifold(a),
        Command::Asymptotics(a) => commands::asymptotics(a),
        Command::Query(a) => commands::query(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
