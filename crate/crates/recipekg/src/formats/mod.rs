//! On-disk formats. Text formats are UTF-8 and tab separated; binary formats
//! are little-endian with a four-byte magic.

pub mod binary;
pub mod embeddings;
pub mod tsv;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{io_err, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(io_err(path))
}

/// Write `contents` to `path`, creating parent directories.
pub fn write_bytes(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(contents).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub(crate) fn origin(path: &Path) -> String {
    path.display().to_string()
}

/// Non-empty, non-comment lines with their 1-based numbers.
pub(crate) fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}
