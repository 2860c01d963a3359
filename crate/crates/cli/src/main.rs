use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(mhhfl_cli::run(std::env::args_os()))
}
