use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::init();
    let mut stdout = std::io::stdout().lock();
    match wsn_cli::main_with_args(std::env::args_os(), &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wsn-sim: {e:#}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
