use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(usimdal_cli::run(std::env::args_os()))
}
