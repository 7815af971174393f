use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(cloudflow::cli::run(std::env::args_os()))
}
