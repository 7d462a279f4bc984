//! Report destinations. Reports go to stdout unless `--out` names a file;
//! relative `--out` paths resolve against `METABIN_OUT_DIR` when that is set.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

pub fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os("METABIN_OUT_DIR") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

pub fn emit(out: Option<&Path>, body: &str) -> Result<(), CliError> {
    match out {
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(body.as_bytes())
                .and_then(|()| stdout.flush())
                .map_err(|e| CliError::Internal(format!("writing stdout: {e}")))
        }
        Some(path) => write_file(path, body),
    }
}

pub fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    let full = resolve_out(path);
    if let Some(parent) = full.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Internal(format!("creating {}: {e}", parent.display())))?;
        }
    }
    std::fs::write(&full, body)
        .map_err(|e| CliError::Internal(format!("writing {}: {e}", full.display())))
}

/// Left-aligned plain-text table. Every row must have `headers.len()` cells.
pub fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut text = String::new();
    let render = |cells: Vec<&str>, text: &mut String| {
        let line = cells
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect::<Vec<_>>()
            .join("  ");
        text.push_str(line.trim_end());
        text.push('\n');
    };
    render(headers.to_vec(), &mut text);
    for row in rows {
        render(row.iter().map(String::as_str).collect(), &mut text);
    }
    text
}
