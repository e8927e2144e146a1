use std::process::ExitCode;

use bcg_cli::{run, Cli, CliError};
use clap::Parser;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // --help and --version land here too and are not errors.
            return if e.use_stderr() { ExitCode::from(CliError::EXIT_USAGE as u8) } else { ExitCode::SUCCESS };
        }
    };
    let default_level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bcg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
