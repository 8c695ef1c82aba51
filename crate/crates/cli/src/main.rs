use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = aquafuse_cli::Cli::parse();
    match aquafuse_cli::run(cli) {
        Ok(outcome) => {
            for (file, err) in &outcome.file_errors {
                eprintln!("error: {file}: {err}");
            }
            if outcome.success() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
