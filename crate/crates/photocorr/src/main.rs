use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use photocorr::cli::{exit_code, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stderr = std::io::stderr().lock();
    match run(cli, &mut stderr) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            ExitCode::from(exit_code(e.class()) as u8)
        }
    }
}
