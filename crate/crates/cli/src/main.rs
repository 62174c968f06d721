use clap::{Parser, Subcommand, ValueEnum};
use lorentz_cli::{config, run, CliError, Command, ExperimentConfig, Overrides};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lorentz", version, about = "Random point-obstacle scattering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// TOML experiment configuration; defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (must be new or empty).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores when absent. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Solver for `solve`.
    #[arg(long, global = true, value_enum)]
    method: Option<Method>,
    /// Covariance prefactor headlined by `fluctuations`.
    #[arg(long, global = true, value_enum)]
    variant: Option<Variant>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Scattering length by Nyström and radial ODE, with resonance margins.
    ScatteringLength,
    /// Writes one sampled configuration per N.
    SampleConfig,
    /// Validates the configuration and reports regularity statistics.
    CheckConfig {
        /// Configuration CSV to check instead of sampling.
        points: Option<PathBuf>,
    },
    /// Solves one configuration with the chosen method.
    Solve,
    /// Monte Carlo convergence sweep with rate fits.
    Converge,
    /// Fluctuation statistics of the probe matrix element.
    Fluctuations,
    /// Closed-form K2 against volumetric quadrature.
    KernelsSelftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Pointcharge,
    Aghh,
    Microscopic,
    Effective,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Verbatim,
    Symmetric,
}

fn execute(cli: Cli) -> Result<lorentz_cli::Outcome, CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::validation(e.to_string()))?;
    }
    let cfg = match &cli.config {
        Some(p) => config::load(p)?,
        None => ExperimentConfig::default(),
    };
    let mut ov = Overrides {
        out: cli.out,
        seed: cli.seed,
        method: cli.method.map(|m| {
            match m {
                Method::Pointcharge => "pointcharge",
                Method::Aghh => "aghh",
                Method::Microscopic => "microscopic",
                Method::Effective => "effective",
            }
            .to_string()
        }),
        variant: cli.variant.map(|v| {
            match v {
                Variant::Verbatim => "verbatim",
                Variant::Symmetric => "symmetric",
            }
            .to_string()
        }),
        points: None,
    };
    let cmd = match cli.command {
        Cmd::ScatteringLength => Command::ScatteringLength,
        Cmd::SampleConfig => Command::SampleConfig,
        Cmd::CheckConfig { points } => {
            ov.points = points;
            Command::CheckConfig
        }
        Cmd::Solve => Command::Solve,
        Cmd::Converge => Command::Converge,
        Cmd::Fluctuations => Command::Fluctuations,
        Cmd::KernelsSelftest => Command::KernelsSelftest,
    };
    run(cmd, cfg, &ov)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(outcome) => {
            // A closed pipe (e.g. `| head`) is not an error of the run.
            let _ = writeln!(std::io::stdout(), "{}", lorentz_cli::output::pretty(&outcome.report).trim_end());
            match outcome.failure {
                None => ExitCode::SUCCESS,
                Some(e) => {
                    eprintln!("{}", e.to_json());
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
