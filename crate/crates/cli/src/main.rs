//! `sphere-dm`: builds differentiation matrices on the sphere and writes the
//! spectral-stability experiments as CSV and JSON files.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_config_text, validate, Experiment, ExperimentConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "sphere-dm", version, about = "Kernel differentiation matrices on the sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate node sets and their mesh metrics
    Points(Overrides),
    /// Write the global DM and the local DM for each K
    Dm(Overrides),
    /// Global and local spectra with a summary
    Spectra(Overrides),
    /// ‖R‖ against the separation radius with an algebraic rate fit
    Rnorm(Overrides),
    /// Local-versus-global spectra distance across K with an exponential rate fit
    Localdist(Overrides),
    /// RK4 trajectory with an energy monotonicity verdict
    Energy(Overrides),
    /// Block decomposition diagnostics
    Report(Overrides),
    /// Check a configuration without running it
    Validate(Overrides),
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// key=value config file (an output's header line also works); flags override it
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// fibonacci, hammersley, min_energy or file
    #[arg(long)]
    family: Option<String>,
    /// Node counts, comma separated
    #[arg(long = "N", value_name = "LIST")]
    n: Option<String>,
    /// ss:m=<int> or imq:eps=<real>
    #[arg(long)]
    kernel: Option<String>,
    /// Symbol coefficients p=c0,c1,... in powers of Δ
    #[arg(long, allow_hyphen_values = true)]
    operator: Option<String>,
    /// Polynomial degree bound (defaults to the kernel's minimal order)
    #[arg(long)]
    mtilde: Option<String>,
    /// Stencil parameters, comma separated
    #[arg(long = "K", value_name = "LIST")]
    k: Option<String>,
    /// Time step, or auto for 1/(2ρ)
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<String>,
    /// Node file with one x y z row per point
    #[arg(long = "points-file")]
    points_file: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(String, String)> {
        [
            ("family", &self.family),
            ("N", &self.n),
            ("kernel", &self.kernel),
            ("operator", &self.operator),
            ("mtilde", &self.mtilde),
            ("K", &self.k),
            ("dt", &self.dt),
            ("steps", &self.steps),
            ("out", &self.out),
            ("points_file", &self.points_file),
            ("seed", &self.seed),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
        .collect()
    }
}

fn load(overrides: &Overrides, experiment: Option<Experiment>) -> Result<ExperimentConfig, CliError> {
    let mut pairs = match &overrides.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
            parse_config_text(&text)?
        }
        None => Vec::new(),
    };
    pairs.extend(overrides.pairs());
    if let Some(exp) = experiment {
        pairs.push(("experiment".into(), exp.as_str().into()));
    }
    ExperimentConfig::from_pairs(&pairs)
}

fn execute(command: Command) -> Result<(), CliError> {
    let (overrides, experiment) = match command {
        Command::Validate(o) => {
            let cfg = load(&o, None)?;
            let report = validate(&cfg);
            println!("{}\n{report}", cfg.header_line());
            return if report.is_valid() { Ok(()) } else { Err(CliError::Invalid(report.errors())) };
        }
        Command::Points(o) => (o, Experiment::Points),
        Command::Dm(o) => (o, Experiment::Dm),
        Command::Spectra(o) => (o, Experiment::Spectra),
        Command::Rnorm(o) => (o, Experiment::Rnorm),
        Command::Localdist(o) => (o, Experiment::Localdist),
        Command::Energy(o) => (o, Experiment::Energy),
        Command::Report(o) => (o, Experiment::DecompReport),
    };
    let cfg = load(&overrides, Some(experiment))?;
    let report = validate(&cfg);
    for issue in report.issues.iter().filter(|i| i.severity == config::Severity::Warning) {
        eprintln!("{issue}");
    }
    if !report.is_valid() {
        return Err(CliError::Invalid(report.errors()));
    }
    let written = commands::run(&cfg)?;
    for p in &written.0 {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sphere-dm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
