use std::io;
use std::process::ExitCode;

use clap::Parser;
use smoothlmc::cli::{self, Cli, Outcome};

fn main() -> ExitCode {
    let args = Cli::parse();
    if let Err(e) = cli::init_threads() {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    let mut stdout = io::stdout().lock();
    match cli::execute(args, &mut stdout) {
        Ok(outcome) => {
            match &outcome {
                Outcome::Success => {}
                Outcome::Diverged(msg) | Outcome::Refused(msg) | Outcome::Failed(msg) => eprintln!("{msg}"),
            }
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
