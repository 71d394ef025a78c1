use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use oneshot_cli::{deliver, execute, Cli, EXIT_INPUT};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT as u8 } else { 0 });
        }
    };
    let code = match execute(&cli.command) {
        Ok(r) => {
            if let Some(d) = &r.diagnostic {
                eprintln!("{d}");
            }
            match deliver(&cli.command, &r) {
                Ok(true) => r.code,
                Ok(false) => {
                    let _ = std::io::stdout().write_all(r.text.as_bytes());
                    r.code
                }
                Err(f) => {
                    eprintln!("error: {}", f.message);
                    f.code
                }
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    };
    ExitCode::from(code as u8)
}
