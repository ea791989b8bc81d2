use std::process::ExitCode;

use clap::Parser;

use fg_cli::commands::{execute, Cli};
use fg_cli::CliError;

fn fail(code: u8, err: String) -> ExitCode {
    eprintln!("{err}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = std::env::var("FG_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(1, CliError::BadInput(e.to_string()).to_json()),
    };
    match execute(&cli) {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out.output).expect("json serialises"));
            ExitCode::from(out.exit_code as u8)
        }
        Err(e) => fail(1, e.to_json()),
    }
}
