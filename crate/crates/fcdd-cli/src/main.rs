//! `fcdd`: train anomaly detection models, re-evaluate their snapshots,
//! and build the comparison reports around them.
//!
//! Every subcommand writes its resolved configuration as `config.json`
//! into the output directory before starting work, so each output
//! directory names the flags that produced it. Exit codes: 0 on success,
//! 1 on validation errors (bad flags or inputs, nothing written), 2 on
//! runtime failures with partial artifacts left in place.

mod commands;

use std::process::ExitCode;

use clap::Parser;

use commands::CmdError;

fn main() -> ExitCode {
    let cli = match commands::Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CmdError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
