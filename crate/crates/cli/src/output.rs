//! CSV files with a provenance comment on the first line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::CliError;

/// `# fnn key=value ...`, with spaces in values replaced so the line stays
/// splittable on whitespace.
pub fn provenance_line(pairs: &[(String, String)]) -> String {
    let mut line = String::from("# fnn");
    for (k, v) in pairs {
        let _ = write!(line, " {k}={}", v.replace(char::is_whitespace, "_"));
    }
    line
}

/// Writes `body` under `dir/name` after the provenance line and returns the path.
pub fn write_csv(
    dir: &Path,
    name: &str,
    provenance: &[(String, String)],
    body: &str,
) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    let text = format!("{}\n{body}", provenance_line(provenance));
    std::fs::write(&path, text)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Empty for `None`; the shortest round-tripping form otherwise.
pub fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Quotes a free-text CSV field.
pub fn quote(s: &str) -> String {
    if s.is_empty() {
        String::new()
    } else {
        format!("\"{}\"", s.replace('"', "'").replace('\n', " "))
    }
}
