use std::io::Write;
use std::path::Path;

use hkm_core::report::fmt_float;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::Failure;

/// Write via a temporary file in the destination directory and rename, so
/// readers never observe a partial artifact.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<(), Failure> {
    let io = |e: std::io::Error| {
        Failure::input(format!("cannot write {}: {e}", dir.join(name).display()))
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(dir.join(name)).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| {
        Failure::input(format!(
            "cannot create output directory {}: {e}",
            dir.display()
        ))
    })
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), Failure> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Failure::input(e.to_string()))?;
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|&v| fmt_float(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
