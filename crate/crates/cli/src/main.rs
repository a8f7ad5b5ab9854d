use std::process::ExitCode;

use clap::Parser;

use albert_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("albert {}: error: {msg}", cli.command.name());
            ExitCode::FAILURE
        }
    }
}
