use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use uncertain_eval_cli::{run, Cli, CliError};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Some(report)) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            if let Err(e) = report.write(&mut out, cli.format).and_then(|_| Ok(out.flush()?)) {
                eprintln!("error: {e}");
                return ExitCode::from(e.exit_code() as u8);
            }
            if cli.strict && report.degenerate {
                let e = CliError::Degenerate("result collapsed to a point mass".into());
                eprintln!("error: {e}");
                return ExitCode::from(e.exit_code() as u8);
            }
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
