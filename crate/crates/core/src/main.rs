use std::process::ExitCode;

use clap::Parser;
use metricdepth::cli::{run, Cli, Suites};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli, &Suites::library(), &mut std::io::stdout().lock()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
