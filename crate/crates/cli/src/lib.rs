//! Command-line front end: CSV tables, model archives and subcommands.

pub mod archive;
pub mod commands;
pub mod table;

use clap::Parser;

pub use archive::{ArchiveError, Model, ModelArchive, ModelKind};
pub use table::{load_table, save_table, LoadOptions, Table, TableError};

/// Parses `argv` (program name first) and runs the subcommand.
/// Returns the process exit code: 0 success, 1 runtime failure, 2 usage error.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match commands::Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
