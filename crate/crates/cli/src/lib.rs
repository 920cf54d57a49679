//! Command-line front end for `zosd-core`.
//!
//! The binary is a thin wrapper around [`run`]; the pieces are public so the
//! integration tests can parse command output with the same types.

pub mod args;
pub mod commands;
pub mod error;
pub mod output;
pub mod settings;

use std::io::Write;

use args::{Cli, Command};
use error::CliResult;
use settings::Settings;

pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    if let Command::Openness {
        n_train,
        n_target,
        n_test,
    } = cli.command
    {
        return commands::openness_cmd(n_train, n_target, n_test, out);
    }
    let settings = Settings::resolve(&cli.opts)?;
    match &cli.command {
        Command::Score { image_id, verbose } => commands::score(&settings, image_id, *verbose, out),
        Command::Evaluate => commands::evaluate_cmd(&settings, out),
        Command::Candidates { image_id } => commands::candidates(&settings, image_id, out),
        Command::ExportSynthetic => commands::export_synthetic(&settings, out),
        Command::Openness { .. } => unreachable!(),
    }
}
