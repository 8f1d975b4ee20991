//! `depthkit` command-line front end.
//!
//! Exit codes: 0 success, 2 malformed or missing input, 3 invalid parameter
//! or usage, 4 internal invariant violation.

mod analyze;
mod arch;
mod encode;
mod eval;
mod files;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use files::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "depthkit",
    version,
    about = "Depth encodings, RGB-D detector architecture audits and detection evaluation",
    after_help = "Environment:\n  DEPTHKIT_THREADS  cap on worker threads (default: one per hardware thread)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode depth maps as grayscale, jet or HDHA images.
    Encode(encode::EncodeArgs),
    /// Build a detector variant and report its graph, shapes and parameters.
    Arch(arch::ArchArgs),
    /// Score detections: VOC mAP, COCO AP, confusion matrices and their difference.
    Eval(eval::EvalArgs),
    /// Average depth against box size heatmaps, and heatmap similarity.
    Analyze(analyze::AnalyzeArgs),
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("DEPTHKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| CliError::Usage(format!("DEPTHKIT_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Encode(a) => encode::run(&a),
        Command::Arch(a) => arch::run(&a),
        Command::Eval(a) => eval::run(&a),
        Command::Analyze(a) => analyze::run(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    std::panic::set_hook(Box::new(|info| eprintln!("depthkit: internal error: {info}")));
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("depthkit: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(_) => ExitCode::from(4),
    }
}
