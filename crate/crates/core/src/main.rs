use std::process::ExitCode;

fn main() -> ExitCode {
    match rmix_core::cli::run(std::env::args().collect()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("rmix: {e}");
            ExitCode::from(2)
        }
    }
}
