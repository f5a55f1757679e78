//! `scsa` — semantically masked style transfer on the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.
//! stdout carries only requested payloads (the ssl JSON report); all
//! diagnostics go to stderr.

use std::process::ExitCode;

use clap::Parser;

mod commands;
mod config;

#[derive(Parser)]
#[command(
    name = "scsa",
    version,
    about = "Semantically masked style transfer toolkit"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Subcommand)]
enum Cmd {
    /// Quantize a pair of semantic maps into aligned label maps.
    Segment(commands::SegmentArgs),
    /// Stylize a content image with a style image under semantic guidance.
    Transfer(commands::TransferArgs),
    /// Score stylized features against style features per semantic region.
    Ssl(commands::SslArgs),
    /// Write one attention module's post-softmax weights as a feature file.
    DumpAttn(commands::DumpAttnArgs),
    /// Stylize across a hyperparameter grid and assemble a contact sheet.
    Sweep(commands::SweepArgs),
}

/// Exit code for a failed run: numeric trouble is 3, configuration and
/// usage mistakes are 1, everything else (unreadable/invalid data) is 2.
fn exit_code_for(e: &scsa_core::Error) -> u8 {
    fn root(e: &scsa_core::Error) -> &scsa_core::Error {
        match e {
            scsa_core::Error::Stage { source, .. } => root(source),
            other => other,
        }
    }
    if e.is_numeric() {
        3
    } else if matches!(root(e), scsa_core::Error::InvalidConfig(_)) {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = commands::init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let result = match cli.cmd {
        Cmd::Segment(a) => commands::segment(a),
        Cmd::Transfer(a) => commands::transfer(a),
        Cmd::Ssl(a) => commands::ssl(a),
        Cmd::DumpAttn(a) => commands::dump_attn(a),
        Cmd::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
