use std::panic;
use std::process::ExitCode;

use clap::Parser;
use phqfuse::{Cli, CliError, Style};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let style = Style::detect();
    panic::set_hook(Box::new(|_| {}));
    let outcome = panic::catch_unwind(|| phqfuse::run(&cli, &style)).unwrap_or_else(|payload| {
        let message = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unexpected panic".into());
        Err(CliError::Internal(message))
    });
    // a closed stdout (e.g. piping into `head`) is not a failure
    if let Err(CliError::Internal(m)) = &outcome {
        if m.starts_with("failed printing to stdout") {
            return ExitCode::SUCCESS;
        }
    }
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
