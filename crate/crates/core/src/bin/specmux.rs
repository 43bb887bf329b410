use std::process::ExitCode;

fn main() -> ExitCode {
    specmux::cli::main_from(std::env::args_os())
}
