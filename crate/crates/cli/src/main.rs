use std::process::ExitCode;

use clap::Parser;
use medqa_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(outcome) => {
            if outcome.warnings > 0 {
                eprintln!("finished with {} failed item(s); see summary.json", outcome.warnings);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
