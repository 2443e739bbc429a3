//! Command-line workflows over the facetrank pipeline.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags, unknown config
//! keys, missing input paths, invalid parameters), 2 on data errors.

mod args;
mod commands;
mod config;

use std::io::Write;
use std::path::Path;

use clap::Parser;

pub use args::Cli;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl From<facetrank_core::Error> for CliError {
    fn from(e: facetrank_core::Error) -> Self {
        match e {
            facetrank_core::Error::Config(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let argv = match config::expand_argv(argv) {
        Ok(a) => a,
        Err(e) => return report(e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match commands::execute(cli.command) {
        Ok(()) => 0,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so readers never observe a partial artifact.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let fail = |e: std::io::Error| CliError::Data(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(contents).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}
