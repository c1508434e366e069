use std::io::{stderr, stdout};
use std::process::ExitCode;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let code = stagecut_cli::run(&argv, &mut stdout().lock(), &mut stderr().lock());
    ExitCode::from(code as u8)
}
