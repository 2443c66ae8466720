//! Result files land atomically: content goes to a temp file in the
//! destination directory and renames into place, so a reader never sees a
//! half-written table.

use std::io::Write as _;
use std::path::Path;

use crate::failure::{CliResult, Failure};

pub fn atomic_write(path: &Path, contents: &str) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let fail = |e: &dyn std::fmt::Display| Failure::Usage(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_existing_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        atomic_write(&path, "old\n").unwrap();
        atomic_write(&path, "new\n").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "new\n");
    }

    #[test]
    fn missing_directory_is_reported_with_the_path() {
        let err = atomic_write(Path::new("/nonexistent-dir/x.csv"), "x").unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }
}
