use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use simhash_attn_cli::{run, Cli, CliError, Rendered};

fn emit(r: &Rendered) -> Result<(), CliError> {
    match &r.output {
        Some(path) => std::fs::write(path, &r.body)?,
        None => std::io::stdout().lock().write_all(r.body.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command).and_then(|r| emit(&r)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("simhash-attn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
