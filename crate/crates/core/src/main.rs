use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = scop::cli::Cli::parse();
    match scop::cli::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
