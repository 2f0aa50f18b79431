use std::process::ExitCode;

use clap::Parser;
use ftrans::config::process_env;
use ftrans::{run, Cli, USAGE};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli, &process_env) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(USAGE)
        }
    }
}
