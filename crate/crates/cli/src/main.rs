mod cli;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;
use clap::error::ErrorKind;

use trifact_core::Error;

use crate::cli::{Cli, Command};
use crate::config::FileConfig;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Divergence { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    let file = match FileConfig::load(cli.config.as_deref()) {
        Ok(file) => file,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(exit_code(&err));
        }
    };

    let outcome = match cli.command {
        Command::Ingest(args) => commands::run_ingest(args, &file).map(|()| 0),
        Command::Synth(args) => commands::run_synth(args, &file).map(|()| 0),
        Command::Train(args) => commands::run_train(args, &file).map(|()| 0),
        Command::Eval(args) => commands::run_eval(args, &file).map(|()| 0),
        Command::Compare(args) => commands::run_compare(args, &file).map(|()| 0),
        Command::GradCheck(args) => {
            // a failed check is a data-level failure, not a crash
            commands::run_grad_check(args, &file).map(|passed| if passed { 0 } else { 2 })
        }
    };

    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            if let Error::Io { source, .. } = &err {
                eprintln!("  caused by: {source}");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
