mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use report::{emit, envelope, error_envelope, render_csv};

#[derive(Parser, Debug)]
#[command(name = "cocycle-spectra", version, about = "Simplicity checks and Lyapunov spectra of linear cocycles")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Global {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Iterations for Monte Carlo estimates (per-command default when absent).
    #[arg(long, global = true)]
    pub iters: Option<u64>,
    /// Steps between QR re-orthonormalizations.
    #[arg(long, global = true, default_value_t = 10)]
    pub renorm: u64,
    /// Command tolerance (per-command default when absent).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "COCYCLE_SPECTRA_THREADS")]
    pub threads: Option<usize>,
    /// Exact rational arithmetic where the inputs allow it (default).
    #[arg(long, global = true, conflicts_with = "float")]
    pub exact: bool,
    /// Floating-point arithmetic throughout.
    #[arg(long, global = true)]
    pub float: bool,
}

impl Global {
    pub fn exact_mode(&self) -> bool {
        !self.float
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Pinching and twisting at the spec's periodic and homoclinic points.
    Simplicity(commands::SimplicityArgs),
    /// Lyapunov spectrum of the Zorich cocycle.
    Zorich(commands::ZorichArgs),
    /// Push a random fiber measure along a backward orbit.
    Dirac(commands::DiracArgs),
    /// Generalized Vandermonde determinant and its Schur part.
    Vandermonde(commands::VandermondeArgs),
    /// First-return cocycle on a cylinder and the exponent rescaling.
    Induce(commands::InduceArgs),
    /// Stable and unstable holonomies between the spec's special points.
    Holonomy(commands::HolonomyArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simplicity(_) => "simplicity",
            Command::Zorich(_) => "zorich",
            Command::Dirac(_) => "dirac",
            Command::Vandermonde(_) => "vandermonde",
            Command::Induce(_) => "induce",
            Command::Holonomy(_) => "holonomy",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    let mut config = serde_json::json!({ "global": cli.global, "args": cli.command });
    if let Some(t) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let start = Instant::now();
    let res = match &cli.command {
        Command::Simplicity(a) => commands::simplicity(&cli.global, a),
        Command::Zorich(a) => commands::zorich(&cli.global, a),
        Command::Dirac(a) => commands::dirac(&cli.global, a),
        Command::Vandermonde(a) => commands::vandermonde(&cli.global, a),
        Command::Induce(a) => commands::induce(&cli.global, a),
        Command::Holonomy(a) => commands::holonomy(&cli.global, a),
    };
    let wall_time = start.elapsed().as_secs_f64();
    let out = cli.global.out.as_deref();
    match res {
        Ok((effective, r)) => {
            config["effective"] = effective;
            let text = match cli.global.format {
                Format::Json => Ok(format!(
                    "{}\n",
                    serde_json::to_string_pretty(&envelope(name, &config, &r, wall_time)).expect("json")
                )),
                Format::Csv => render_csv(name, &r.table),
            };
            match text.and_then(|t| emit(&t, out)) {
                Ok(()) => ExitCode::from(r.outcome.exit_code() as u8),
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if cli.global.format == Format::Json {
                let text = format!(
                    "{}\n",
                    serde_json::to_string_pretty(&error_envelope(name, &config, &e.to_string())).expect("json")
                );
                let _ = emit(&text, out);
            }
            ExitCode::from(2)
        }
    }
}
