use std::io;
use std::process::ExitCode;

use clap::Parser;
use colorgan::cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    match execute(&cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("colorgan: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
