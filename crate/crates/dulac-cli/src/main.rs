//! `dulac`: realize horn-map moduli as germs, extract them back, and evaluate the model.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use commands::ValidationError;

#[derive(Debug, Parser)]
#[command(name = "dulac", version, about)]
struct Cli {
    /// Worker threads; all cores by default
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Realize a moduli file as a germ.
    ///
    /// Writes `run.json` (inputs and report), `atlas.csv` (columns
    /// petal, re_zeta, im_zeta, re_r, im_r) and `germ.csv` (columns petal,
    /// re_zeta, im_zeta, re_f, im_f, re_f0, im_f0, abel_residual) to the output directory.
    Realize(commands::RealizeArgs),
    /// Extract horn maps of a germ into `extracted.json` and `extract.json`.
    Extract(commands::ExtractArgs),
    /// Realize, extract and compare a moduli file; writes `roundtrip.json`.
    Roundtrip(commands::RoundtripArgs),
    /// Check a moduli file for validity, symmetry and radius bounds.
    VerifyModuli(commands::VerifyArgs),
    /// Evaluate model functions with 17 significant digits.
    Model(commands::ModelArgs),
    /// Re-realize a saved run and export atlas, germ or orbit data as CSV.
    Export(commands::ExportArgs),
}

#[derive(Serialize)]
struct ErrorReport {
    error: &'static str,
    message: String,
}

/// 1 for bad input, 2 for numerical failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    use dulac_core::Error as E;
    for cause in err.chain() {
        if cause.is::<ValidationError>()
            || cause.is::<std::io::Error>()
            || cause.is::<serde_json::Error>()
            || cause.is::<toml::de::Error>()
            || cause.is::<csv::Error>()
        {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Invalid(_) | E::NonTangent { .. } | E::NotIntersectionPetal { .. } | E::EmptyLine { .. } => 1,
                _ => 2,
            };
        }
    }
    2
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Realize(a) => commands::cmd_realize(a),
        Command::Extract(a) => commands::cmd_extract(a),
        Command::Roundtrip(a) => commands::cmd_roundtrip(a),
        Command::VerifyModuli(a) => commands::cmd_verify_moduli(a),
        Command::Model(a) => commands::cmd_model(a),
        Command::Export(a) => commands::cmd_export(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            let report = ErrorReport {
                error: if code == 1 { "validation" } else { "numerical" },
                message: format!("{err:#}"),
            };
            eprint!("{}", output::to_json(&report).unwrap_or_else(|_| format!("{err:#}\n")));
            ExitCode::from(code)
        }
    }
}
