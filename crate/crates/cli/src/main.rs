use std::process::ExitCode;

use clap::Parser;
use fracmap_cli::commands::execute;
use fracmap_cli::config::Cli;
use fracmap_cli::init_threads;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|()| execute(&cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fracmap: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
