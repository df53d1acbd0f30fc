//! Library side of the `simhash-attn` binary: argument types, the four
//! subcommands, and their CSV/JSON renderers.

use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

pub mod args;
pub mod bench;
pub mod collide;
pub mod demo;
pub mod sweep;

pub use args::{Angle, BenchArgs, Cli, CollideArgs, Command, DemoArgs, Format, SweepArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] simhash_attn::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Encode(String),
}

impl CliError {
    /// 2 for bad invocations (including rejected configuration values), 1
    /// for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Run(simhash_attn::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Encode(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Encode(e.to_string())
    }
}

/// Rendered output and where it should go (`None` means stdout).
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub body: String,
    pub output: Option<PathBuf>,
}

/// Resolves config files, runs the subcommand and renders its output.
pub fn run(command: Command) -> Result<Rendered, CliError> {
    match command {
        Command::Bench(a) => {
            let a = a.resolve()?;
            let report = bench::run(&a)?;
            Ok(Rendered {
                body: report.render(a.format.unwrap_or_default())?,
                output: a.output,
            })
        }
        Command::Sweep(a) => {
            let a = a.resolve()?;
            let rows = sweep::run(&a)?;
            Ok(Rendered {
                body: sweep::render(&rows, a.format.unwrap_or_default())?,
                output: a.output,
            })
        }
        Command::CollideProb(a) => {
            let a = a.resolve()?;
            let rows = collide::run(&a)?;
            Ok(Rendered {
                body: collide::render(&rows, a.format.unwrap_or_default())?,
                output: a.output,
            })
        }
        Command::DemoForward(a) => {
            let a = a.resolve()?;
            if a.format == Some(Format::Csv) {
                return Err(CliError::Usage("demo-forward only writes json".into()));
            }
            let summary = demo::run(&a)?;
            Ok(Rendered {
                body: to_json(&summary)?,
                output: a.output,
            })
        }
    }
}

pub(crate) fn positive(name: &str, value: usize) -> Result<usize, CliError> {
    if value == 0 {
        return Err(CliError::Usage(format!("--{name} must be positive")));
    }
    Ok(value)
}

pub(crate) fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub(crate) fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Encode(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Encode(e.to_string()))
}
