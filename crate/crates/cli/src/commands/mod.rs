pub mod conditioning;
pub mod eval;
pub mod plan;
pub mod preprocess;
pub mod shard;
pub mod stream;

use std::io::Write;
use std::path::Path;

use crate::error::CliError;

pub(crate) fn emit(out: &mut dyn Write, line: &str) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|e| CliError::io("stdout", e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path.display(), e))
}
