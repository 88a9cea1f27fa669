//! Command-line front end for `phqfuse-core`.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod inputs;
pub mod term;

pub use args::{Cli, Command};
pub use error::CliError;
pub use term::Style;

pub fn run(cli: &Cli, style: &Style) -> Result<(), CliError> {
    match &cli.command {
        Command::Validate(a) => commands::validate(a, style),
        Command::Synth(a) => commands::synth(a),
        Command::Evaluate(a) => commands::evaluate(a, style),
        Command::Dca(a) => commands::dca(a),
        Command::Calibration(a) => commands::calibration(a),
    }
}
