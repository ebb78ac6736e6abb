use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = cavmold_cli::app::Cli::parse();
    match cavmold_cli::app::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
