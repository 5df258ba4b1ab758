//! Command-line front end: config resolution, subcommand dispatch and report I/O.

pub mod commands;
pub mod config;

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

pub use config::{parse_config, resolve, Cli, Command, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_FAILED,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<intensity_lasso::Error> for CliError {
    fn from(e: intensity_lasso::Error) -> Self {
        use intensity_lasso::Error as E;
        match e {
            E::Overflow { .. } | E::NonFinite(_) | E::Quadrature(_) => Self::runtime(e.to_string()),
            _ => Self::input(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    NotConverged,
    Failed,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => EXIT_OK,
            Status::NotConverged | Status::Failed => EXIT_FAILED,
        }
    }
}

/// Envelope of every JSON report.
#[derive(Debug, Serialize)]
pub struct Report<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub status: Status,
    pub config: &'a RunConfig,
    pub result: T,
}

pub fn write_report<T: Serialize>(config: &RunConfig, status: Status, result: T) -> Result<(), CliError> {
    let report = Report {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        status,
        config,
        result,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::runtime(e.to_string()))?;
    match &config.out {
        Some(path) => write_file(path, text.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}").map_err(|e| CliError::runtime(e.to_string()))
        }
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

fn configure_threads(threads: Option<usize>) {
    if let Some(t) = threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
}

/// Parses, runs and returns the process exit code; errors go to stderr.
pub fn run(cli: &Cli) -> i32 {
    let result = parse_config(&cli.command).and_then(|config| {
        configure_threads(config.threads);
        commands::execute(&config)
    });
    match result {
        Ok(status) => status.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
