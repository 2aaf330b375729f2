use std::io::Write;
use std::process::ExitCode;

use qdev_cli::{run, Streams};

fn main() -> ExitCode {
    let stdin = std::io::stdin();
    let mut stdout = std::io::BufWriter::new(std::io::stdout().lock());
    let mut stderr = std::io::stderr().lock();
    let code = run(
        std::env::args_os(),
        &mut Streams { stdin: &mut stdin.lock(), stdout: &mut stdout, stderr: &mut stderr },
    );
    if stdout.flush().is_err() {
        return ExitCode::from(1);
    }
    ExitCode::from(code as u8)
}
