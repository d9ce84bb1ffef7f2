use std::process::ExitCode;

fn main() -> ExitCode {
    let result = swproj_cli::configure_threads().and_then(|()| swproj_cli::run(std::env::args().skip(1)));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message.trim_end());
            ExitCode::from(e.exit_code())
        }
    }
}
