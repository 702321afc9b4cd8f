mod args;
mod commands;
mod output;

#[cfg(test)]
mod cli_tests;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::{CliError, Session};

/// Runs one command, writing its report to `out`; `Ok(false)` means a check failed.
fn execute<W: Write>(cli: Cli, mut out: W) -> Result<bool, CliError> {
    let session = Session::open(cli.config)?;
    let passed = match &cli.command {
        Command::Eval { spec } => session.eval(spec, &mut out)?,
        Command::Table => session.table(&mut out)?,
        Command::Check { suite } => session.check(*suite, &mut out)?,
    };
    session.save()?;
    Ok(passed)
}

fn exit_code(result: &Result<bool, CliError>) -> u8 {
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => e.exit_code(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut buf = Vec::new();
    let result = execute(cli, &mut buf);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    if let Err(e) = std::io::stdout().lock().write_all(&buf) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    ExitCode::from(exit_code(&result))
}
