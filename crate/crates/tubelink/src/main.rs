use std::process::ExitCode;

fn main() -> ExitCode {
    tubelink::cli::main_with(std::env::args_os())
}
