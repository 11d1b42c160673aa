mod commands;
mod config;

use clap::{CommandFactory, Parser};

use commands::{dispatch, Cli};

/// Parses `argv` (config file first, flags on top) and runs one subcommand.
/// Returns the process exit code.
fn run(argv: Vec<String>) -> i32 {
    let argv = match config::config_path(&argv) {
        Some(path) => {
            let merged = std::fs::read_to_string(&path)
                .map_err(|e| format!("cannot read config {path}: {e}"))
                .and_then(|text| config::parse_ini(&text))
                .and_then(|ini| config::merge(&argv, &ini, &Cli::command()));
            match merged {
                Ok(a) => a,
                Err(msg) => {
                    eprintln!("error: {msg}");
                    return 1;
                }
            }
        }
        None => argv,
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::process::exit(run(std::env::args().collect()));
}
