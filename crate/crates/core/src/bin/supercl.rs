use std::process::ExitCode;

fn main() -> ExitCode {
    supercl::cli::main_with_args(std::env::args_os())
}
