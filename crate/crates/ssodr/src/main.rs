use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    match ssodr::cli::execute(ssodr::cli::Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code())
        }
    }
}
