//! Command-line driver: solve models, run Monte Carlo evaluations and beta
//! sweeps, and record every run in a manifest.

mod args;
mod commands;
mod manifest;

use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};
use serde_json::json;

use args::{Cli, ConfigFile};

/// Failure with the process exit code it maps to: 2 for bad input, 3 for
/// solver trouble.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            kind: "validation",
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::usage(format!("{}: {e}", path.display()))
    }
}

impl From<hydro_reserve::Error> for CliError {
    fn from(e: hydro_reserve::Error) -> Self {
        if e.is_validation() {
            Self::usage(e.to_string())
        } else {
            Self {
                code: 3,
                kind: "solver",
                message: e.to_string(),
            }
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn version() -> &'static str {
    let text = format!(
        "{} ({})",
        manifest::ARTIFACT_VERSION,
        hydro_reserve::lp::backend_version()
    );
    Box::leak(text.into_boxed_str())
}

fn fail(err: &CliError) -> ExitCode {
    let body = json!({ "error": { "code": err.code, "kind": err.kind, "message": err.message } });
    eprintln!("{body}");
    ExitCode::from(err.code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = match Cli::command().version(version()).try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return fail(&CliError::usage(e.to_string().trim_end().to_string()));
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => return fail(&CliError::usage(e.to_string())),
    };
    let config = match cli.config.as_deref().map(ConfigFile::load).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(e) => return fail(&e),
    };
    match commands::run(cli.command, config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
