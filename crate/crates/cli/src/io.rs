//! File helpers: newline-delimited JSON in and out, with usage-level error
//! mapping.

use crate::CliError;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

pub fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let mut file = std::fs::File::create(path)
        .map_err(|e| CliError::other(format!("cannot create {}: {e}", path.display())))?;
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| CliError::other(e.to_string()))?;
        writeln!(file, "{line}").map_err(|e| CliError::other(e.to_string()))?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::other(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| CliError::other(format!("cannot write {}: {e}", path.display())))
}
