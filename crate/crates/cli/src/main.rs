use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use povmdt_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            if cli.out.is_none() {
                let _ = std::io::stdout().write_all(&outcome.table);
            }
            eprintln!("{}", outcome.summary);
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("povmdt: tolerance exceeded");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("povmdt: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
