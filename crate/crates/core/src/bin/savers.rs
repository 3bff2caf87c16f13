use std::process::ExitCode;

fn main() -> ExitCode {
    match savers_core::cli::run_with(std::env::args_os(), &mut std::io::stdout()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
