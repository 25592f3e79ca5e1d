use std::process::ExitCode;

fn main() -> ExitCode {
    mrac_core::cli::main_from(std::env::args_os())
}
