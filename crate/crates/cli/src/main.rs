use std::process::ExitCode;

fn main() -> ExitCode {
    aiotsim::main_with(std::env::args_os())
}
