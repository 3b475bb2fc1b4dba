use std::process::ExitCode;

fn main() -> ExitCode {
    let mut stdout = std::io::stdout().lock();
    ExitCode::from(closest_balanced::cli::run(std::env::args_os(), &mut stdout))
}
