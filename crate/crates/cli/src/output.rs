//! Row serialization and atomic file writes.

use std::io::Write;
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

pub fn render_rows<R: Serialize>(rows: &[R], format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in rows {
                w.serialize(row).map_err(|e| CliError::Runtime(format!("csv: {e}")))?;
            }
            w.into_inner().map_err(|e| CliError::Runtime(format!("csv: {e}")))
        }
        Format::Json => {
            let mut bytes = serde_json::to_vec_pretty(rows).map_err(|e| CliError::Runtime(format!("json: {e}")))?;
            bytes.push(b'\n');
            Ok(bytes)
        }
    }
}

/// Writes through a temporary file in the same directory, then renames, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut tmp = NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        a: f64,
        b: Option<f64>,
    }

    #[test]
    fn csv_leaves_missing_values_empty() {
        let rows = [Row { a: 0.5, b: None }, Row { a: 1.0, b: Some(2.0) }];
        let text = String::from_utf8(render_rows(&rows, Format::Csv).unwrap()).unwrap();
        assert_eq!(text, "a,b\n0.5,\n1.0,2.0\n");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
