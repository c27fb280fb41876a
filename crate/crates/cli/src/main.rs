//! `floquet`: configuration-driven front end for time evolution, weak-probe
//! spectra and the figure datasets of the five-state example.

mod commands;
mod exit;
mod figures;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use floquet_core::model::ValidationReport;
use floquet_core::Error;
use serde_json::json;

use output::Format;

#[derive(Parser, Debug)]
#[command(name = "floquet", version, about = "Weak-probe absorption of Floquet-driven open quantum systems", after_help = exit::help_text())]
struct Cli {
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// TOML configuration; the bundled five-state example when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Override a configuration value by dotted path, e.g. drive.rabi_c.1.3=9.0.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[command(flatten)]
    pub config: ConfigArgs,

    /// Directory receiving the output files.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,

    /// Tabular output format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Args, Debug, Clone)]
pub struct Window {
    /// Lower probe offset Δω_p, GHz.
    #[arg(long, default_value_t = -5.0, allow_negative_numbers = true)]
    pub from: f64,

    /// Upper probe offset Δω_p, GHz.
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    pub to: f64,

    /// Grid points.
    #[arg(long, default_value_t = 2001)]
    pub points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Spectral,
    Direct,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig1,
    Fig2a,
    Fig2b,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a configuration; prints one JSON line per violation.
    Validate(ConfigArgs),
    /// Integrate the harmonic system and write harmonic and time-domain trajectories.
    Evolve {
        #[command(flatten)]
        common: Common,
        /// Largest |N| written to the harmonic trajectory.
        #[arg(long, default_value_t = 4)]
        max_n: i32,
    },
    /// Integrate to t_end and write the converged harmonic components.
    Steady {
        #[command(flatten)]
        common: Common,
    },
    /// Diagonalise the Floquet Hamiltonian and write the dressed states.
    Dressed {
        #[command(flatten)]
        common: Common,
        /// Source A state for the weights (default: first populated).
        #[arg(long)]
        source: Option<usize>,
    },
    /// Weak-probe susceptibility and absorption over a probe-offset grid.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        window: Window,
        #[arg(long, value_enum, default_value_t = Method::Spectral)]
        method: Method,
        /// Dressed-state markers kept.
        #[arg(long, default_value_t = 15)]
        top_k: usize,
    },
    /// Datasets behind the figures of the five-state example.
    Figures {
        #[arg(value_enum)]
        figure: Figure,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        window: Window,
    },
}

pub enum Failure {
    Core(Error),
    Violations(ValidationReport),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(Failure::Core(Error::InvalidArgument(e.to_string())));
        }
    }
    let result = match cli.command {
        Command::Validate(cfg) => return commands::validate(&cfg),
        Command::Evolve { common, max_n } => commands::evolve(&common, max_n),
        Command::Steady { common } => commands::steady(&common),
        Command::Dressed { common, source } => commands::dressed(&common, source),
        Command::Spectrum { common, window, method, top_k } => commands::spectrum(&common, &window, method, top_k),
        Command::Figures { figure, common, window } => figures::run(figure, &common, &window),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => fail(f),
    }
}

fn fail(f: Failure) -> ExitCode {
    let (body, code) = match f {
        Failure::Core(e) => {
            let code = exit::code_for(&e);
            (json!({ "error": e.kind(), "message": e.to_string(), "exit_code": code }), code)
        }
        Failure::Violations(r) => (
            json!({ "error": "ValidationFailed", "message": "configuration violates model invariants", "exit_code": exit::VIOLATIONS, "violations": r.violations }),
            exit::VIOLATIONS,
        ),
    };
    eprintln!("{body}");
    ExitCode::from(code)
}
