use std::process::ExitCode;

fn main() -> ExitCode {
    fragsim::cli::main_with_args(std::env::args_os())
}
