mod args;
mod commands;
mod config;
mod error;

use args::{Cli, Command};
use clap::{CommandFactory, Parser};
use error::{CliError, Result};
use std::process::ExitCode;

fn run(cli: &Cli) -> Result<()> {
    let ctx = commands::Context::new(&cli.global)?;
    match &cli.command {
        Command::Calibrate(a) => commands::calibrate(&ctx, a),
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Train(a) => commands::train_model(&ctx, a),
        Command::Estimate(a) => commands::estimate(&ctx, a),
        Command::Evaluate(a) => commands::evaluate(&ctx, a),
        Command::SweepAlpha(a) => commands::sweep(&ctx, a),
        Command::Stats(a) => commands::stats(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let message: Vec<&str> = rendered
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:"))
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!(
                "error[usage]: {}",
                message.join(" ").trim_start_matches("error: ")
            );
            eprintln!("{}", Cli::command().render_usage());
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.class(), e.to_string().replace('\n', " "));
            if matches!(e, CliError::Usage(_)) {
                eprintln!("{}", Cli::command().render_usage());
            }
            ExitCode::from(e.exit_code())
        }
    }
}
