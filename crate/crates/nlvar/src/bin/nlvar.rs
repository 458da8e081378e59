use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(nlvar::cli::run(std::env::args()) as u8)
}
