mod cli;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use cli::{Cli, Command};

fn run(cli: Cli) -> mvrr::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(mvrr::MvrrError::InvalidArgument("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| mvrr::MvrrError::InvalidArgument(e.to_string()))?;
    }
    match &cli.command {
        Command::Fit(a) => cli::commands::fit(a),
        Command::Cv(a) => cli::commands::cv(a),
        Command::Simulate(a) => cli::commands::simulate(a),
        Command::Predict(a) => cli::commands::predict(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
