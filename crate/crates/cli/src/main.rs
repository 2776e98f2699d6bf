use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use coagself_cli::{configure_threads, parse_config, run_command, Cli, CliError};

fn run() -> Result<(), CliError> {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let cfg = parse_config(&cli)?;
    configure_threads()?;
    let outcome = run_command(&cfg)?;
    if let Some(text) = outcome.stdout {
        std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(format!("cannot write to stdout: {e}")))?;
    }
    for p in &outcome.written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
