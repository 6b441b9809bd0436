use std::process::ExitCode;

use bellfilter_cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(failure) => {
            if let Some(summary) = failure.summary() {
                print!("{summary}");
            }
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
