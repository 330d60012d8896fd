use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(lowrank_sdp::cli::main_entry(std::env::args_os()) as u8)
}
