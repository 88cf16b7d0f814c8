use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TBPOS_LOG", "warn")).init();
    let cli = scanloc_cli::Cli::parse();
    match scanloc_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("scanloc: {e}");
            e.exit_code()
        }
    }
}
