//! Atomic report and artifact writers.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::{AppError, AppResult};

/// Write `path` through a temporary file in the same directory, renamed
/// into place once complete.
pub fn write_atomic(
    path: &Path,
    fill: impl FnOnce(&mut dyn Write) -> AppResult<()>,
) -> AppResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)
        .map_err(|e| AppError::missing(format!("cannot create {}: {e}", dir.display())))?;
    let tmp = NamedTempFile::new_in(dir)
        .map_err(|e| AppError::missing(format!("cannot write in {}: {e}", dir.display())))?;
    {
        let mut out = BufWriter::new(tmp.as_file());
        fill(&mut out)?;
        out.flush().map_err(|e| io_error(path, e))?;
    }
    tmp.persist(path).map_err(|e| io_error(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    write_atomic(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)
            .map_err(|e| AppError::internal(format!("cannot serialize {}: {e}", path.display())))?;
        writeln!(out).map_err(|e| io_error(path, e))
    })
}

pub fn io_error(path: &Path, e: std::io::Error) -> AppError {
    AppError::missing(format!("cannot write {}: {e}", path.display()))
}
