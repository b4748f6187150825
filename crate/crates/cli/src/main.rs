use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = accrue_cli::Cli::parse();
    let mut stderr = std::io::stderr().lock();
    match accrue_cli::run(cli, &mut stderr) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
