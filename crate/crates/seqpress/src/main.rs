use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(seqpress::cli::run(std::env::args_os()))
}
